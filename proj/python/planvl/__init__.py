"""Dict-friendly wrappers around the _planvl core module."""

import json as _json

try:
    from . import _planvl as _core
except ImportError:  # running against a build tree: the module sits on sys.path
    import _planvl as _core

__version__ = _core.__version__

Error = _core.Error
ValidationError = _core.ValidationError
PreconditionError = _core.PreconditionError
IoError = _core.IoError
ParseError = _core.ParseError
TransportError = _core.TransportError
BackendError = _core.BackendError
StageError = _core.StageError

STAGE_ORDER = list(_core.stage_order)
MODEL_ROLES = list(_core.model_roles)

sha256_hex = _core.sha256_hex
derive_id = _core.derive_id
mean_cosine = _core.mean_cosine
sliced_wasserstein = _core.sliced_wasserstein
select_diverse_subset = _core.select_diverse_subset


def _dumps(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def run_pipeline(config, stages=(), force=False):
    """Run pipeline stages for a config dict (or JSON string); returns a result dict."""
    return _json.loads(_core.run_pipeline_json(_dumps(config), list(stages), force))


def validate_config(config):
    _core.validate_config_json(_dumps(config))


def config_hash(config):
    return _core.config_hash(_dumps(config))


def parse_filter_verdict(map_id, raw):
    return _json.loads(_core.parse_filter_verdict_json(map_id, raw))


def parse_critical_points(raw):
    return _json.loads(_core.parse_critical_points_json(raw))


def parse_judge_output(raw, n):
    return _json.loads(_core.parse_judge_output_json(raw, n))


def aggregate_report(results, items, reference=None):
    reference_json = "" if reference is None else _dumps(reference)
    return _json.loads(_core.aggregate_report_json(_dumps(results), _dumps(items), reference_json))


def render_report_markdown(results, items, model_label, reference=None):
    reference_json = "" if reference is None else _dumps(reference)
    return _core.render_report_markdown(_dumps(results), _dumps(items), model_label, reference_json)


def build_spectrum(taggings, k, seed=0):
    return _json.loads(_core.build_spectrum_json(_dumps(taggings), k, seed))


def mmd_rbf(x, y, bandwidth=None):
    return _json.loads(_core.mmd_rbf_json(x, y, bandwidth))


def distribution_report(x, y, projections=128, seed=0):
    return _json.loads(_core.distribution_report_json(x, y, projections, seed))


def leakage_scan(train, eval_records, threshold=0.9, max_findings=0):
    return _json.loads(
        _core.leakage_scan_json(_dumps(train), _dumps(eval_records), threshold, max_findings)
    )


__all__ = [
    "Error",
    "ValidationError",
    "PreconditionError",
    "IoError",
    "ParseError",
    "TransportError",
    "BackendError",
    "StageError",
    "STAGE_ORDER",
    "MODEL_ROLES",
    "sha256_hex",
    "derive_id",
    "mean_cosine",
    "sliced_wasserstein",
    "select_diverse_subset",
    "run_pipeline",
    "validate_config",
    "config_hash",
    "parse_filter_verdict",
    "parse_critical_points",
    "parse_judge_output",
    "aggregate_report",
    "render_report_markdown",
    "build_spectrum",
    "mmd_rbf",
    "distribution_report",
    "leakage_scan",
]
