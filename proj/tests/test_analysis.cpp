#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "planvl/analysis.hpp"
#include "planvl/errors.hpp"
#include "planvl/hash.hpp"
#include "test_support.hpp"

using namespace planvl;

namespace {

EmbeddingRecord record(const std::string& id, std::vector<double> values) {
  EmbeddingRecord r;
  r.id = id;
  r.vector.dim = static_cast<int>(values.size());
  r.vector.values = std::move(values);
  r.vector.source = PayloadKind::text;
  r.vector.model_id = "emb-1";
  return r;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Exact W1 between equal-size empirical measures: cheapest perfect matching.
double assignment_w1(const std::vector<std::vector<double>>& X,
                     const std::vector<std::vector<double>>& Y) {
  std::vector<std::size_t> perm(Y.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) cost += euclid(X[i], Y[perm[i]]);
    best = std::min(best, cost / static_cast<double>(X.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE("analysis.leakage") {
  TEST_CASE("planted duplicate is flagged and ranked first") {
    std::vector<EmbeddingRecord> train{record("t1", {1, 0, 0, 0}), record("t2", {0, 1, 0, 0}),
                                       record("t3", {0.6, 0.8, 0, 0})};
    std::vector<EmbeddingRecord> eval_set{record("e1", {1, 0, 0, 0}),
                                          record("e2", {0, 0, 1, 0})};
    LeakageReport report = leakage_scan(train, eval_set, 0.9);
    CHECK(report.summary.total_pairs == 6);
    CHECK(report.summary.flagged == 1);
    CHECK(report.summary.flagged_pct == doctest::Approx(100.0 / 6.0));
    REQUIRE_FALSE(report.findings.empty());
    CHECK(report.findings[0].train_id == "t1");
    CHECK(report.findings[0].eval_id == "e1");
    CHECK(report.findings[0].cosine == doctest::Approx(1.0));
    CHECK(report.findings[0].flagged);
    for (std::size_t i = 1; i < report.findings.size(); ++i) {
      CHECK(report.findings[i - 1].cosine >= report.findings[i].cosine);
      CHECK_FALSE(report.findings[i].flagged);
    }
  }

  TEST_CASE("report json truncates findings but not the summary") {
    std::vector<EmbeddingRecord> train{record("t1", {1, 0}), record("t2", {0, 1})};
    std::vector<EmbeddingRecord> eval_set{record("e1", {1, 0}), record("e2", {0, 1})};
    LeakageReport report = leakage_scan(train, eval_set, 0.9);
    json full = report.to_json();
    json cut = report.to_json(1);
    CHECK(full["findings"].size() == 4);
    CHECK(cut["findings"].size() == 1);
    CHECK(cut["summary"]["total_pairs"] == 4);
    CHECK(cut["summary"]["flagged"] == 2);
  }

  TEST_CASE("manual review attaches verdicts to matching pairs") {
    std::vector<EmbeddingRecord> train{record("t1", {1, 0})};
    std::vector<EmbeddingRecord> eval_set{record("e1", {1, 0}), record("e2", {0, 1})};
    LeakageReport report = leakage_scan(train, eval_set, 0.9);
    apply_manual_review(report, json{{"t1|e1", "distinct"}, {"t9|e9", "leak"}});
    bool saw = false;
    for (const auto& f : report.findings) {
      if (f.train_id == "t1" && f.eval_id == "e1") {
        REQUIRE(f.manual_verdict.has_value());
        CHECK(*f.manual_verdict == "distinct");
        saw = true;
      } else {
        CHECK_FALSE(f.manual_verdict.has_value());
      }
    }
    CHECK(saw);
    CHECK_THROWS_AS(apply_manual_review(report, json{{"t1|e1", "maybe"}}), ValidationError);
  }

  TEST_CASE("input validation") {
    std::vector<EmbeddingRecord> ok{record("t1", {1, 0})};
    CHECK_THROWS_AS(leakage_scan({}, ok), PreconditionError);
    CHECK_THROWS_AS(leakage_scan(ok, {}), PreconditionError);
    std::vector<EmbeddingRecord> bad{record("e1", {1, 0, 0})};
    CHECK_THROWS_AS(leakage_scan(ok, bad), PreconditionError);
  }

  TEST_CASE("embedding records round-trip through jsonl-shaped json") {
    EmbeddingRecord r = record("id-1", {0.25, -0.5, 1.0});
    CHECK(EmbeddingRecord::from_json(r.to_json()) == r);
    EmbeddingRecord unnamed = record("", {1.0});
    CHECK_THROWS_AS(unnamed.validate(), ValidationError);
  }
}

TEST_SUITE("analysis.mmd") {
  TEST_CASE("two-point sets match the hand-expanded kernel sum") {
    const std::vector<std::vector<double>> X{{0.0}, {1.0}};
    const std::vector<std::vector<double>> Y{{2.0}, {3.0}};
    MmdResult r = mmd_rbf(X, Y, 1.0);
    // unbiased estimate written out termwise for sigma = 1
    const double kxx = std::exp(-0.5);
    const double kyy = std::exp(-0.5);
    const double kxy =
        std::exp(-2.0) + std::exp(-4.5) + std::exp(-0.5) + std::exp(-2.0);
    const double expected = kxx + kyy - kxy / 2.0;
    CHECK(std::abs(r.raw - expected) < 1e-12);
    CHECK(r.value == r.raw);  // positive here
    CHECK(r.bandwidth == 1.0);
    CHECK(r.nx == 2);
    CHECK(r.ny == 2);
  }

  TEST_CASE("a set against itself never reports positive discrepancy") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::vector<std::vector<double>> X(12, std::vector<double>(3));
    for (auto& v : X)
      for (auto& x : v) x = unif(rng);
    MmdResult r = mmd_rbf(X, X);
    CHECK(r.value <= 1e-9);
    CHECK(r.raw <= 0.0);
  }

  TEST_CASE("median-distance bandwidth is picked up and reported") {
    const std::vector<std::vector<double>> X{{0.0}, {1.0}};
    const std::vector<std::vector<double>> Y{{2.0}, {3.0}};
    MmdResult r = mmd_rbf(X, Y);
    // pairwise distances {1,2,3,1,2,1} -> sorted {1,1,1,2,2,3}, median 1.5
    CHECK(r.bandwidth == doctest::Approx(1.5));
  }

  TEST_CASE("identical single-valued sets short-circuit to zero") {
    const std::vector<std::vector<double>> X{{1.0}, {1.0}};
    MmdResult r = mmd_rbf(X, X);
    CHECK(r.value == 0.0);
    CHECK(r.bandwidth == 0.0);
  }

  TEST_CASE("separated distributions score higher than overlapping ones") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto blob = [&](double shift) {
      std::vector<std::vector<double>> out(20, std::vector<double>(2));
      for (auto& v : out) {
        v[0] = unif(rng) + shift;
        v[1] = unif(rng);
      }
      return out;
    };
    auto A = blob(0.0), B = blob(0.1), C = blob(5.0);
    CHECK(mmd_rbf(A, C).value > mmd_rbf(A, B).value);
  }

  TEST_CASE("argument validation") {
    const std::vector<std::vector<double>> X{{0.0}, {1.0}};
    CHECK_THROWS_AS(mmd_rbf(X, {}), PreconditionError);
    CHECK_THROWS_AS(mmd_rbf(X, {{1.0}}), PreconditionError);
    CHECK_THROWS_AS(mmd_rbf(X, X, 0.0), PreconditionError);
    CHECK_THROWS_AS(mmd_rbf(X, {{1.0, 2.0}, {3.0, 4.0}}), PreconditionError);
  }
}

TEST_SUITE("analysis.wasserstein") {
  TEST_CASE("identical sets are exactly zero") {
    const std::vector<std::vector<double>> X{{0.1, 0.2}, {0.9, -0.4}, {2.0, 1.0}};
    CHECK(sliced_wasserstein(X, X, 64, 5) == 0.0);
  }

  TEST_CASE("translations recover the shift length within ten percent") {
    const std::vector<std::vector<double>> X{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}};
    std::vector<std::vector<double>> Y = X;
    for (auto& v : Y) v[0] += 3.0;  // true W1 = 3
    const double sw = sliced_wasserstein(X, Y, 1024, 0);
    CHECK(std::abs(sw - 3.0) / 3.0 < 0.10);
  }

  TEST_CASE("small sets approximate the exact assignment cost") {
    const std::vector<std::vector<double>> X{{0.0, 0.0}, {1.0, 0.2}, {0.4, 1.1}, {-0.5, 0.6}};
    const std::vector<std::vector<double>> Y{{2.1, 0.1}, {3.0, 0.4}, {2.4, 1.3}, {1.6, 0.9}};
    const double truth = assignment_w1(X, Y);
    const double sw = sliced_wasserstein(X, Y, 1024, 0);
    CHECK(std::abs(sw - truth) / truth < 0.10);
  }

  TEST_CASE("collinear one-dimensional data is recovered almost exactly") {
    // both sets on the x-axis: slicing only rescales, the correction undoes it
    const std::vector<std::vector<double>> X{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
    const std::vector<std::vector<double>> Y{{4.0, 0.0}, {5.0, 0.0}, {6.0, 0.0}};
    const double sw = sliced_wasserstein(X, Y, 2048, 11);
    CHECK(std::abs(sw - 4.0) / 4.0 < 0.05);
  }

  TEST_CASE("unequal sample sizes use the quantile coupling") {
    // 1-D check against the hand integral for {0,1} vs {0,1,2}:
    // quantile gaps 1 on [1/3,1/2) and [2/3,1) give 1/6 + 1/3 = 1/2
    const std::vector<std::vector<double>> X{{0.0}, {1.0}};
    const std::vector<std::vector<double>> Y{{0.0}, {1.0}, {2.0}};
    // dim = 1, so the correction is 1 and every direction is +-1,
    // making the result exact regardless of seed
    const double sw = sliced_wasserstein(X, Y, 16, 3);
    CHECK(sw == doctest::Approx(0.5).epsilon(1e-9));
  }

  TEST_CASE("determinism and argument validation") {
    const std::vector<std::vector<double>> X{{0, 1}, {1, 0}};
    const std::vector<std::vector<double>> Y{{2, 1}, {1, 2}};
    CHECK(sliced_wasserstein(X, Y, 32, 9) == sliced_wasserstein(X, Y, 32, 9));
    CHECK(sliced_wasserstein(X, Y, 32, 9) != sliced_wasserstein(X, Y, 32, 10));
    CHECK_THROWS_AS(sliced_wasserstein(X, Y, 0, 1), PreconditionError);
    CHECK_THROWS_AS(sliced_wasserstein(X, {}, 8, 1), PreconditionError);
  }
}

TEST_SUITE("analysis.distribution") {
  TEST_CASE("mean cosine compares the two sample means") {
    const std::vector<std::vector<double>> X{{1, 0}, {0, 1}};   // mean (0.5, 0.5)
    const std::vector<std::vector<double>> Y{{2, 2}, {4, 4}};   // mean (3, 3)
    CHECK(mean_cosine(X, Y) == doctest::Approx(1.0));
    const std::vector<std::vector<double>> Z{{-1, 1}};
    CHECK(mean_cosine(X, Z) == doctest::Approx(0.0));
    const std::vector<std::vector<double>> degenerate{{1, 0}, {-1, 0}};
    CHECK_THROWS_AS(mean_cosine(degenerate, Y), PreconditionError);
  }

  TEST_CASE("full report collects every metric with stable keys") {
    const std::vector<std::vector<double>> X{{0, 0}, {1, 0}, {0, 1}};
    DistributionReport r = distribution_report(X, X, 32, 1);
    CHECK(r.mean_cosine == doctest::Approx(1.0));
    CHECK(r.mmd == 0.0);
    CHECK(r.wasserstein == 0.0);
    CHECK(r.nx == 3);
    CHECK(r.ny == 3);
    json j = r.to_json();
    for (const char* key : {"mean_cosine", "mmd", "mmd_raw", "wasserstein", "nx", "ny",
                            "kernel_bandwidth", "projections"}) {
      CHECK(j.contains(key));
    }
  }
}

TEST_SUITE("analysis.projection") {
  TEST_CASE("rank-two data keeps pairwise distances") {
    // points in a 5-D space spanned by two orthogonal directions
    std::vector<double> u{1, 0, 0, 0, 0};
    std::vector<double> v{0, 0, 1, 0, 0};
    std::vector<std::pair<double, double>> coords{
        {0, 0}, {4, 0.5}, {-3, 1}, {2, -2}, {-1, 0.25}, {5, 2}};
    std::vector<std::vector<double>> X;
    for (const auto& [a, b] : coords) {
      std::vector<double> p(5, 0.0);
      for (int d = 0; d < 5; ++d) p[d] = a * u[d] + b * v[d];
      X.push_back(p);
    }
    auto projected = project_2d(X);
    REQUIRE(projected.size() == X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
      for (std::size_t j = i + 1; j < X.size(); ++j) {
        const double original = euclid(X[i], X[j]);
        const double flat = std::hypot(projected[i][0] - projected[j][0],
                                       projected[i][1] - projected[j][1]);
        CHECK(flat == doctest::Approx(original).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("rank-deficient input warns and zeroes the second axis") {
    std::vector<std::vector<double>> X{{0, 0, 0}, {1, 2, 2}, {2, 4, 4}, {3, 6, 6}};
    std::string warning;
    auto projected = project_2d(X, &warning);
    CHECK(warning.find("rank-deficient") != std::string::npos);
    for (const auto& p : projected) CHECK(p[1] == 0.0);
    // spacing along the line is preserved
    CHECK(std::abs(projected[1][0] - projected[0][0]) ==
          doctest::Approx(std::abs(projected[3][0] - projected[2][0])));
  }

  TEST_CASE("too few points is a precondition") {
    CHECK_THROWS_AS(project_2d({{1, 0}, {0, 1}}), PreconditionError);
  }
}

TEST_SUITE("analysis.kde") {
  TEST_CASE("grid mass approximates one for well-contained data") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<std::array<double, 2>> points(40);
    for (auto& p : points) p = {unif(rng), unif(rng)};
    KdeGrid grid = kde_grid(points, 64, 0.15);
    REQUIRE(grid.xs.size() == 64);
    REQUIRE(grid.values.size() == 64);
    const double cell = (grid.xs[1] - grid.xs[0]) * (grid.ys[1] - grid.ys[0]);
    double mass = 0.0;
    for (const auto& row : grid.values) {
      for (const double v : row) mass += v * cell;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(0.08));
  }

  TEST_CASE("density peaks where the points cluster") {
    std::vector<std::array<double, 2>> points(10, {0.0, 0.0});
    points.push_back({5.0, 5.0});
    KdeGrid grid = kde_grid(points, 32);
    double best = -1.0;
    std::size_t best_ix = 0, best_iy = 0;
    for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
      for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
        if (grid.values[iy][ix] > best) {
          best = grid.values[iy][ix];
          best_ix = ix;
          best_iy = iy;
        }
      }
    }
    CHECK(std::abs(grid.xs[best_ix]) < 1.0);
    CHECK(std::abs(grid.ys[best_iy]) < 1.0);
  }

  TEST_CASE("csv renderings carry headers and ids") {
    std::vector<std::array<double, 2>> points{{0.0, 0.0}, {1.0, 1.0}};
    KdeGrid grid = kde_grid(points, 2, 0.5);
    const std::string csv = kde_grid_csv(grid);
    CHECK(csv.rfind("y\\x,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    const std::string with_ids = points_csv(points, {"a", "b"});
    CHECK(with_ids.rfind("id,x,y\n", 0) == 0);
    CHECK(with_ids.find("a,0,0\n") != std::string::npos);
    const std::string bare = points_csv(points, {});
    CHECK(bare.find("0,0,0\n") != std::string::npos);
    CHECK_THROWS_AS(points_csv(points, {"only-one"}), PreconditionError);
  }

  TEST_CASE("argument validation") {
    std::vector<std::array<double, 2>> points{{0.0, 0.0}};
    CHECK_THROWS_AS(kde_grid({}, 8), PreconditionError);
    CHECK_THROWS_AS(kde_grid(points, 1), PreconditionError);
    CHECK_THROWS_AS(kde_grid(points, 8, 0.0), PreconditionError);
  }
}
