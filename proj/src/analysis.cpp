#include "planvl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "planvl/hash.hpp"

namespace planvl {

void EmbeddingRecord::validate() const {
  if (id.empty()) throw ValidationError("EmbeddingRecord: id must be nonempty");
  vector.validate();
}

json EmbeddingRecord::to_json() const {
  return json{{"id", id},
              {"dim", vector.dim},
              {"source", to_string(vector.source)},
              {"model_id", vector.model_id},
              {"values", vector.values}};
}

EmbeddingRecord EmbeddingRecord::from_json(const json& j) {
  EmbeddingRecord r;
  r.id = j.at("id").get<std::string>();
  r.vector.values = j.at("values").get<std::vector<double>>();
  r.vector.dim = j.at("dim").get<int>();
  const std::string source = j.value("source", "text");
  r.vector.source = source == "image" ? PayloadKind::image : PayloadKind::text;
  r.vector.model_id = j.value("model_id", std::string{});
  r.validate();
  return r;
}

json LeakageFinding::to_json() const {
  json j{{"train_id", train_id},
         {"eval_id", eval_id},
         {"cosine", round6(cosine)},
         {"flagged", flagged}};
  if (manual_verdict) j["manual_verdict"] = *manual_verdict;
  return j;
}

LeakageFinding LeakageFinding::from_json(const json& j) {
  LeakageFinding f;
  f.train_id = j.at("train_id").get<std::string>();
  f.eval_id = j.at("eval_id").get<std::string>();
  f.cosine = j.at("cosine").get<double>();
  f.flagged = j.at("flagged").get<bool>();
  if (j.contains("manual_verdict")) f.manual_verdict = j["manual_verdict"].get<std::string>();
  return f;
}

json LeakageReport::to_json(std::size_t max_findings) const {
  json rows = json::array();
  const std::size_t limit =
      max_findings == 0 ? findings.size() : std::min(max_findings, findings.size());
  for (std::size_t i = 0; i < limit; ++i) rows.push_back(findings[i].to_json());
  return json{{"threshold", threshold},
              {"summary", json{{"total_pairs", summary.total_pairs},
                               {"flagged", summary.flagged},
                               {"flagged_pct", round6(summary.flagged_pct)}}},
              {"findings", rows}};
}

LeakageReport leakage_scan(const std::vector<EmbeddingRecord>& train,
                           const std::vector<EmbeddingRecord>& eval_set, double threshold) {
  if (train.empty() || eval_set.empty()) {
    throw PreconditionError("leakage_scan: both embedding sets must be nonempty");
  }
  const int dim = train.front().vector.dim;
  for (const auto& r : train) {
    if (r.vector.dim != dim) throw PreconditionError("leakage_scan: dimension mismatch in train");
  }
  for (const auto& r : eval_set) {
    if (r.vector.dim != dim) throw PreconditionError("leakage_scan: dimension mismatch in eval");
  }
  LeakageReport report;
  report.threshold = threshold;
  report.findings.reserve(train.size() * eval_set.size());
  for (const auto& t : train) {
    for (const auto& e : eval_set) {
      LeakageFinding f;
      f.train_id = t.id;
      f.eval_id = e.id;
      f.cosine = cosine_similarity(t.vector.values, e.vector.values);
      f.flagged = f.cosine >= threshold;
      if (f.flagged) ++report.summary.flagged;
      report.findings.push_back(std::move(f));
    }
  }
  std::sort(report.findings.begin(), report.findings.end(),
            [](const LeakageFinding& a, const LeakageFinding& b) {
              if (a.cosine != b.cosine) return a.cosine > b.cosine;
              if (a.train_id != b.train_id) return a.train_id < b.train_id;
              return a.eval_id < b.eval_id;
            });
  report.summary.total_pairs = report.findings.size();
  report.summary.flagged_pct =
      100.0 * static_cast<double>(report.summary.flagged) /
      static_cast<double>(report.summary.total_pairs);
  return report;
}

void apply_manual_review(LeakageReport& report, const json& review) {
  for (auto& f : report.findings) {
    const std::string key = f.train_id + "|" + f.eval_id;
    if (!review.contains(key)) continue;
    const std::string verdict = review[key].get<std::string>();
    if (verdict != "leak" && verdict != "distinct") {
      throw ValidationError("manual review: verdict for '" + key +
                            "' must be 'leak' or 'distinct'");
    }
    f.manual_verdict = verdict;
  }
}

namespace {

void check_same_dim(const std::vector<std::vector<double>>& X,
                    const std::vector<std::vector<double>>& Y, const std::string& what) {
  if (X.empty() || Y.empty()) throw PreconditionError(what + ": sets must be nonempty");
  const std::size_t dim = X.front().size();
  for (const auto& v : X) {
    if (v.size() != dim) throw PreconditionError(what + ": dimension mismatch");
  }
  for (const auto& v : Y) {
    if (v.size() != dim) throw PreconditionError(what + ": dimension mismatch");
  }
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double rng_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) / 9007199254740992.0;
}

// Box-Muller; avoids std::normal_distribution, whose output sequence is
// implementation-defined.
double rng_gauss(std::mt19937_64& rng) {
  double u1 = rng_unit(rng);
  while (u1 <= 0.0) u1 = rng_unit(rng);
  const double u2 = rng_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

double mean_cosine(const std::vector<std::vector<double>>& X,
                   const std::vector<std::vector<double>>& Y) {
  check_same_dim(X, Y, "mean_cosine");
  const std::size_t dim = X.front().size();
  std::vector<double> mx(dim, 0.0), my(dim, 0.0);
  for (const auto& v : X) {
    for (std::size_t d = 0; d < dim; ++d) mx[d] += v[d];
  }
  for (const auto& v : Y) {
    for (std::size_t d = 0; d < dim; ++d) my[d] += v[d];
  }
  for (auto& v : mx) v /= static_cast<double>(X.size());
  for (auto& v : my) v /= static_cast<double>(Y.size());
  double nx = 0.0, ny = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    nx += mx[d] * mx[d];
    ny += my[d] * my[d];
  }
  if (nx == 0.0 || ny == 0.0) {
    throw PreconditionError("mean_cosine: a sample-mean vector has zero norm");
  }
  return cosine_similarity(mx, my);
}

MmdResult mmd_rbf(const std::vector<std::vector<double>>& X,
                  const std::vector<std::vector<double>>& Y, std::optional<double> bandwidth) {
  check_same_dim(X, Y, "mmd_rbf");
  if (X.size() < 2 || Y.size() < 2) {
    throw PreconditionError("mmd_rbf: each set needs at least 2 points");
  }
  MmdResult result;
  result.nx = X.size();
  result.ny = Y.size();

  double sigma;
  if (bandwidth) {
    sigma = *bandwidth;
    if (sigma <= 0.0) throw PreconditionError("mmd_rbf: bandwidth must be > 0");
  } else {
    // median pairwise distance over the union
    std::vector<const std::vector<double>*> all;
    for (const auto& v : X) all.push_back(&v);
    for (const auto& v : Y) all.push_back(&v);
    std::vector<double> dists;
    dists.reserve(all.size() * (all.size() - 1) / 2);
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        dists.push_back(std::sqrt(sq_dist(*all[i], *all[j])));
      }
    }
    std::sort(dists.begin(), dists.end());
    sigma = dists.empty() ? 0.0
            : (dists.size() % 2 ? dists[dists.size() / 2]
                                : 0.5 * (dists[dists.size() / 2 - 1] + dists[dists.size() / 2]));
    if (sigma == 0.0) {
      // every point identical: distributions equal by construction
      result.value = 0.0;
      result.raw = 0.0;
      result.bandwidth = 0.0;
      return result;
    }
  }
  result.bandwidth = sigma;
  const double denom = 2.0 * sigma * sigma;
  auto kernel = [denom](const std::vector<double>& a, const std::vector<double>& b) {
    return std::exp(-sq_dist(a, b) / denom);
  };

  const double m = static_cast<double>(X.size());
  const double n = static_cast<double>(Y.size());
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = 0; j < X.size(); ++j) {
      if (i != j) kxx += kernel(X[i], X[j]);
    }
  }
  for (std::size_t i = 0; i < Y.size(); ++i) {
    for (std::size_t j = 0; j < Y.size(); ++j) {
      if (i != j) kyy += kernel(Y[i], Y[j]);
    }
  }
  for (const auto& x : X) {
    for (const auto& y : Y) kxy += kernel(x, y);
  }
  result.raw = kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
  result.value = std::max(result.raw, 0.0);
  return result;
}

namespace {

// W1 between two 1-D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // integral of |F_a^{-1}(q) - F_b^{-1}(q)| over q in [0,1]: both quantile
  // functions are step functions with breakpoints at i/m and j/n
  const std::size_t m = a.size(), n = b.size();
  std::size_t ia = 0, ib = 0;
  double q = 0.0, total = 0.0;
  while (ia < m && ib < n) {
    const double qa = static_cast<double>(ia + 1) / static_cast<double>(m);
    const double qb = static_cast<double>(ib + 1) / static_cast<double>(n);
    const double q_next = std::min(qa, qb);
    total += (q_next - q) * std::abs(a[ia] - b[ib]);
    q = q_next;
    if (qa <= q_next) ++ia;
    if (qb <= q_next) ++ib;
  }
  return total;
}

// c_d = E|<theta, u>| for random unit theta and fixed unit u.
double slice_correction(std::size_t d) {
  return std::exp(std::lgamma(static_cast<double>(d) / 2.0) -
                  std::lgamma((static_cast<double>(d) + 1.0) / 2.0)) /
         std::sqrt(M_PI);
}

}  // namespace

double sliced_wasserstein(const std::vector<std::vector<double>>& X,
                          const std::vector<std::vector<double>>& Y, int projections,
                          std::uint64_t seed) {
  check_same_dim(X, Y, "sliced_wasserstein");
  if (projections < 1) throw PreconditionError("sliced_wasserstein: projections must be >= 1");
  const std::size_t dim = X.front().size();
  std::mt19937_64 rng(mix_seed(seed, "analysis.sliced_wasserstein"));
  double total = 0.0;
  std::vector<double> theta(dim), px(X.size()), py(Y.size());
  for (int p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (auto& t : theta) {
      t = rng_gauss(rng);
      norm += t * t;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      theta[0] = 1.0;
      norm = 1.0;
    }
    for (auto& t : theta) t /= norm;
    for (std::size_t i = 0; i < X.size(); ++i) {
      px[i] = std::inner_product(theta.begin(), theta.end(), X[i].begin(), 0.0);
    }
    for (std::size_t i = 0; i < Y.size(); ++i) {
      py[i] = std::inner_product(theta.begin(), theta.end(), Y[i].begin(), 0.0);
    }
    total += wasserstein_1d(px, py);
  }
  return (total / static_cast<double>(projections)) / slice_correction(dim);
}

json DistributionReport::to_json() const {
  return json{{"mean_cosine", round6(mean_cosine)},
              {"mmd", round6(mmd)},
              {"mmd_raw", round6(mmd_raw)},
              {"wasserstein", round6(wasserstein)},
              {"nx", nx},
              {"ny", ny},
              {"kernel_bandwidth", round6(kernel_bandwidth)},
              {"projections", projections}};
}

DistributionReport distribution_report(const std::vector<std::vector<double>>& X,
                                       const std::vector<std::vector<double>>& Y, int projections,
                                       std::uint64_t seed) {
  DistributionReport report;
  report.mean_cosine = mean_cosine(X, Y);
  const MmdResult mmd = mmd_rbf(X, Y);
  report.mmd = mmd.value;
  report.mmd_raw = mmd.raw;
  report.kernel_bandwidth = mmd.bandwidth;
  report.wasserstein = sliced_wasserstein(X, Y, projections, seed);
  report.nx = X.size();
  report.ny = Y.size();
  report.projections = projections;
  return report;
}

std::vector<std::array<double, 2>> project_2d(const std::vector<std::vector<double>>& X,
                                              std::string* warning) {
  if (X.size() < 3) throw PreconditionError("project_2d: at least 3 points required");
  const std::size_t n = X.size();
  const std::size_t dim = X.front().size();
  for (const auto& v : X) {
    if (v.size() != dim) throw PreconditionError("project_2d: dimension mismatch");
  }
  std::vector<std::vector<double>> centered = X;
  std::vector<double> mean(dim, 0.0);
  for (const auto& v : X) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (auto& v : centered) {
    for (std::size_t d = 0; d < dim; ++d) v[d] -= mean[d];
  }

  // power iteration on the covariance operator v -> (1/n) X^T (X v)
  auto cov_apply = [&](const std::vector<double>& v) {
    std::vector<double> out(dim, 0.0);
    for (const auto& row : centered) {
      const double dot = std::inner_product(row.begin(), row.end(), v.begin(), 0.0);
      for (std::size_t d = 0; d < dim; ++d) out[d] += dot * row[d];
    }
    for (auto& o : out) o /= static_cast<double>(n);
    return out;
  };

  std::mt19937_64 rng(0x5ca1ab1eULL);
  std::vector<std::vector<double>> axes;
  std::vector<double> eigenvalues;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng_unit(rng) - 0.5;
    // deflate the start vector against found axes
    for (const auto& axis : axes) {
      const double dot = std::inner_product(axis.begin(), axis.end(), v.begin(), 0.0);
      for (std::size_t d = 0; d < dim; ++d) v[d] -= dot * axis[d];
    }
    double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm == 0.0) {
      v[comp % dim] = 1.0;
      norm = 1.0;
    }
    for (auto& x : v) x /= norm;

    double eigen = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
      std::vector<double> next = cov_apply(v);
      for (const auto& axis : axes) {
        const double dot = std::inner_product(axis.begin(), axis.end(), next.begin(), 0.0);
        for (std::size_t d = 0; d < dim; ++d) next[d] -= dot * axis[d];
      }
      const double next_norm =
          std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
      if (next_norm < 1e-14) {
        eigen = 0.0;
        break;
      }
      for (auto& x : next) x /= next_norm;
      double delta = 0.0;
      for (std::size_t d = 0; d < dim; ++d) delta += std::abs(next[d] - v[d]);
      // sign flips oscillate; compare against the flipped vector too
      double delta_flip = 0.0;
      for (std::size_t d = 0; d < dim; ++d) delta_flip += std::abs(next[d] + v[d]);
      v = next;
      eigen = next_norm;
      if (std::min(delta, delta_flip) < 1e-8) break;
    }
    // canonical sign: first nonzero loading positive
    for (std::size_t d = 0; d < dim; ++d) {
      if (std::abs(v[d]) > 1e-12) {
        if (v[d] < 0) {
          for (auto& x : v) x = -x;
        }
        break;
      }
    }
    axes.push_back(v);
    eigenvalues.push_back(eigen);
  }
  if (eigenvalues[1] <= 1e-12 && warning) {
    *warning = "project_2d: data is rank-deficient; second coordinate is zero";
  }

  std::vector<std::array<double, 2>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i][0] = std::inner_product(axes[0].begin(), axes[0].end(), centered[i].begin(), 0.0);
    out[i][1] = eigenvalues[1] <= 1e-12
                    ? 0.0
                    : std::inner_product(axes[1].begin(), axes[1].end(), centered[i].begin(), 0.0);
  }
  return out;
}

KdeGrid kde_grid(const std::vector<std::array<double, 2>>& points, int grid_resolution,
                 std::optional<double> bandwidth) {
  if (points.empty()) throw PreconditionError("kde_grid: at least one point required");
  if (grid_resolution < 2) throw PreconditionError("kde_grid: resolution must be >= 2");
  const std::size_t n = points.size();

  double min_x = points[0][0], max_x = points[0][0];
  double min_y = points[0][1], max_y = points[0][1];
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& p : points) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
    mean_x += p[0];
    mean_y += p[1];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);

  double hx, hy;
  if (bandwidth) {
    if (*bandwidth <= 0.0) throw PreconditionError("kde_grid: bandwidth must be > 0");
    hx = hy = *bandwidth;
  } else {
    // Scott's rule for d=2: h_i = sigma_i * n^(-1/6)
    double var_x = 0.0, var_y = 0.0;
    for (const auto& p : points) {
      var_x += (p[0] - mean_x) * (p[0] - mean_x);
      var_y += (p[1] - mean_y) * (p[1] - mean_y);
    }
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const double factor = std::pow(static_cast<double>(n), -1.0 / 6.0);
    hx = std::sqrt(var_x / denom) * factor;
    hy = std::sqrt(var_y / denom) * factor;
    if (hx <= 0.0) hx = 1.0;
    if (hy <= 0.0) hy = 1.0;
  }

  double span_x = max_x - min_x;
  double span_y = max_y - min_y;
  if (span_x <= 0.0) span_x = 6.0 * hx;
  if (span_y <= 0.0) span_y = 6.0 * hy;
  const double pad_x = 0.1 * span_x;
  const double pad_y = 0.1 * span_y;
  const double lo_x = min_x - pad_x, hi_x = max_x + pad_x;
  const double lo_y = min_y - pad_y, hi_y = max_y + pad_y;

  KdeGrid grid;
  grid.bandwidth_x = hx;
  grid.bandwidth_y = hy;
  grid.xs.resize(grid_resolution);
  grid.ys.resize(grid_resolution);
  for (int i = 0; i < grid_resolution; ++i) {
    grid.xs[i] = lo_x + (hi_x - lo_x) * (static_cast<double>(i) + 0.5) /
                            static_cast<double>(grid_resolution);
    grid.ys[i] = lo_y + (hi_y - lo_y) * (static_cast<double>(i) + 0.5) /
                            static_cast<double>(grid_resolution);
  }
  const double norm = 1.0 / (static_cast<double>(n) * 2.0 * M_PI * hx * hy);
  grid.values.assign(grid_resolution, std::vector<double>(grid_resolution, 0.0));
  for (int iy = 0; iy < grid_resolution; ++iy) {
    for (int ix = 0; ix < grid_resolution; ++ix) {
      double sum = 0.0;
      for (const auto& p : points) {
        const double dx = (grid.xs[ix] - p[0]) / hx;
        const double dy = (grid.ys[iy] - p[1]) / hy;
        sum += std::exp(-0.5 * (dx * dx + dy * dy));
      }
      grid.values[iy][ix] = norm * sum;
    }
  }
  return grid;
}

std::string kde_grid_csv(const KdeGrid& grid) {
  std::ostringstream os;
  os.precision(10);
  os << "y\\x";
  for (const double x : grid.xs) os << "," << x;
  os << "\n";
  for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
    os << grid.ys[iy];
    for (const double v : grid.values[iy]) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string points_csv(const std::vector<std::array<double, 2>>& points,
                       const std::vector<std::string>& ids) {
  if (!ids.empty() && ids.size() != points.size()) {
    throw PreconditionError("points_csv: ids must be empty or match point count");
  }
  std::ostringstream os;
  os.precision(10);
  os << "id,x,y\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    os << (ids.empty() ? std::to_string(i) : ids[i]) << "," << points[i][0] << ","
       << points[i][1] << "\n";
  }
  return os.str();
}

}  // namespace planvl
