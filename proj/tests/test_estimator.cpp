#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "bgc/estimator.hpp"
#include "oracle.hpp"

using namespace bgc;

namespace {

std::shared_ptr<const InputPool> random_pool(std::mt19937_64& rng, std::size_t S,
                                             std::size_t n, std::size_t D,
                                             std::size_t K,
                                             Padding pad = Padding::ZeroSame) {
  std::vector<MultiChannelSignal> xs;
  for (std::size_t s = 0; s < S; ++s) xs.push_back(oracle::random_signal(rng, n, D));
  return std::make_shared<const InputPool>(std::move(xs), K, pad);
}

double output_energy(const InputPool& pool, const StandardConv& w) {
  return pool.targets(w).squaredNorm() / static_cast<double>(pool.sample_count());
}

}  // namespace

TEST_CASE("targets equal stacked forward_standard outputs") {
  std::mt19937_64 rng(1);
  for (Padding pad : {Padding::ZeroSame, Padding::Circular}) {
    const auto pool = random_pool(rng, 3, 4, 6, 3, pad);
    const auto w = oracle::random_conv(rng, 5, 4, 3);
    const Eigen::MatrixXd t = pool->targets(w);
    double err = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto y = forward_standard(w, pool->inputs()[s], pad);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t d = 0; d < 6; ++d)
          err = std::max(err, std::abs(y(i, d) - t(static_cast<Eigen::Index>(s * 6 + d),
                                                   static_cast<Eigen::Index>(i))));
    }
    CHECK(err <= 1e-13 * t.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("build_design: scalar inputs with one channel per group") {
  std::mt19937_64 rng(2);
  const auto pool = random_pool(rng, 5, 3, 1, 1);
  const auto d = build_design(pool, 3, Variant::GC, 1);
  CHECK(d.cols() == 1);
  CHECK(d.rows() == 5);
  const Eigen::MatrixXd a = d.matrix();
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(a(static_cast<Eigen::Index>(s), 0) == pool->inputs()[s](1, 0));
  }
}

TEST_CASE("build_design: BGC has twice the GC columns") {
  std::mt19937_64 rng(3);
  const auto pool = random_pool(rng, 10, 8, 8, 3);
  for (std::size_t N : {1, 2, 4, 8}) {
    CHECK(build_design(pool, N, Variant::BGC, 0).cols() ==
          2 * build_design(pool, N, Variant::GC, 0).cols());
    CHECK(build_design(pool, N, Variant::GC, 0).cols() == 3 * 8 / N);
  }
}

TEST_CASE("build_design: Gram matrix is symmetric positive semidefinite") {
  std::mt19937_64 rng(4);
  const auto pool = random_pool(rng, 6, 4, 5, 3);
  for (Variant v : {Variant::GC, Variant::BGC}) {
    const auto d = build_design(pool, 2, v, 1);
    const Eigen::MatrixXd& g = d.gram();
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * g.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().maxCoeff());
    const Eigen::MatrixXd a = d.matrix();
    CHECK((a.transpose() * a - g).cwiseAbs().maxCoeff() <= 1e-12 * g.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("build_design: errors") {
  std::mt19937_64 rng(5);
  const auto pool = random_pool(rng, 2, 4, 2, 3);
  CHECK_THROWS_AS(build_design(pool, 3, Variant::GC, 0), ConfigError);
  // 4 rows, 12 unknowns.
  CHECK_THROWS_WITH_AS(build_design(pool, 1, Variant::GC, 0),
                       doctest::Contains("increase S or D"), ConfigError);
  CHECK_THROWS_AS(build_design(pool, 2, Variant::GC, 2), ConfigError);
}

TEST_CASE("normal-equation oracle on a 2x2 scalar case") {
  // m = n = 2, K = 1, D = 1, N = 2: y1 = a x1 + b x2 regressed on x1 alone.
  // Closed form: c = sum(y x1) / sum(x1^2), residual = sum(y^2) - c sum(y x1).
  const std::vector<std::pair<double, double>> xs{{1.0, 2.0}, {-1.0, 0.5}, {3.0, -1.0}};
  std::vector<MultiChannelSignal> inputs;
  for (auto [a, b] : xs) inputs.push_back(MultiChannelSignal::from_channels({{a}, {b}}));
  const auto pool = std::make_shared<const InputPool>(inputs, 1, Padding::ZeroSame);
  const StandardConv w(2, 2, 1, {2.0, 3.0, -1.0, 0.5});

  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    double syx = 0.0, sxx = 0.0, syy = 0.0;
    for (auto [x1, x2] : xs) {
      const double y = i == 0 ? 2.0 * x1 + 3.0 * x2 : -x1 + 0.5 * x2;
      const double own = i == 0 ? x1 : x2;
      syx += y * own;
      sxx += own * own;
      syy += y * y;
    }
    expected += syy - syx * syx / sxx;
  }
  expected /= 3.0;

  const auto designs = build_designs(pool, 2, Variant::GC);
  const auto r = solve_trial(designs, w);
  CHECK(r.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.group_errors.size() == 2);
}

TEST_CASE("solve_trial matches the brute-force oracle on small systems") {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (std::size_t m : {2, 4})
    for (std::size_t n : {2, 4})
      for (std::size_t D : {1, 2})
        for (std::size_t S : {4, 8})
          for (std::size_t N : {1, 2, 4}) {
            if (m % N || n % N) continue;
            for (Variant v : {Variant::GC, Variant::BGC}) {
              const std::size_t unknowns = (v == Variant::BGC ? 2 : 1) * n / N;
              if (S * D < unknowns) continue;
              const auto pool = random_pool(rng, S, n, D, 1);
              const auto w = oracle::random_conv(rng, m, n, 1);
              const auto r = solve_trial(build_designs(pool, N, v), w);
              const double ref = oracle::brute_force_trial_error(
                  w, pool->inputs(), N, v == Variant::BGC, Padding::ZeroSame);
              CHECK(std::abs(r.total - ref) <= 1e-10 * output_energy(*pool, w));
              ++checked;
            }
          }
  CHECK(checked > 20);
}

TEST_CASE("solve_trial matches the brute-force oracle with K = 3") {
  std::mt19937_64 rng(16);
  for (Padding pad : {Padding::ZeroSame, Padding::Circular}) {
    for (Variant v : {Variant::GC, Variant::BGC}) {
      const auto pool = random_pool(rng, 4, 4, 5, 3, pad);
      const auto w = oracle::random_conv(rng, 4, 4, 3);
      const auto r = solve_trial(build_designs(pool, 2, v), w);
      const double ref =
          oracle::brute_force_trial_error(w, pool->inputs(), 2, v == Variant::BGC, pad);
      CHECK(std::abs(r.total - ref) <= 1e-10 * output_energy(*pool, w));
    }
  }
}

TEST_CASE("solve_trial: block-diagonal targets are fitted exactly by GC") {
  std::mt19937_64 rng(7);
  const auto pool = random_pool(rng, 20, 8, 6, 3);
  auto w = oracle::random_conv(rng, 8, 8, 3);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      if (i / 2 != j / 2)
        for (double& t : w.kernel(i, j)) t = 0.0;
  const auto r = solve_trial(build_designs(pool, 4, Variant::GC), w);
  CHECK(r.total <= 1e-10 * output_energy(*pool, w));
}

TEST_CASE("solve_trial: BGC with two groups is exact") {
  std::mt19937_64 rng(8);
  const auto pool = random_pool(rng, 20, 8, 6, 3);
  const auto w = oracle::random_conv(rng, 6, 8, 3);
  const auto r = solve_trial(build_designs(pool, 2, Variant::BGC), w);
  CHECK(r.total <= 1e-10 * output_energy(*pool, w));
  CHECK_FALSE(r.flagged);
}

TEST_CASE("solve_trial: one group is exact for either variant") {
  std::mt19937_64 rng(9);
  const auto pool = random_pool(rng, 20, 4, 6, 3);
  const auto w = oracle::random_conv(rng, 4, 4, 3);
  const auto gc = solve_trial(build_designs(pool, 1, Variant::GC), w);
  CHECK(gc.total <= 1e-12 * output_energy(*pool, w));
  CHECK_FALSE(gc.flagged);
  // The mean of one group is the input itself, so the BGC columns repeat and
  // the rank-revealing path takes over.
  const auto bgc = solve_trial(build_designs(pool, 1, Variant::BGC), w);
  CHECK(bgc.total <= 1e-12 * output_energy(*pool, w));
  CHECK(bgc.flagged);
}

TEST_CASE("rank-deficient designs give the minimum-norm solution") {
  std::mt19937_64 rng(10);
  const auto pool = random_pool(rng, 10, 2, 4, 1);
  const auto d = build_design(pool, 1, Variant::BGC, 0);
  REQUIRE(d.rank_deficient());
  const Eigen::MatrixXd b = pool->targets(oracle::random_conv(rng, 1, 2, 1));
  const Eigen::MatrixXd c = d.solve(b);
  // Duplicated columns: the minimum-norm solution splits each weight evenly.
  CHECK(std::abs(c(0, 0) - c(2, 0)) <= 1e-12 * std::abs(c(0, 0)));
  CHECK(std::abs(c(1, 0) - c(3, 0)) <= 1e-12 * std::abs(c(1, 0)));
}

TEST_CASE("cached factorization equals a from-scratch solve") {
  std::mt19937_64 rng(11);
  const auto pool = random_pool(rng, 12, 8, 8, 3);
  for (Variant v : {Variant::GC, Variant::BGC}) {
    const auto designs = build_designs(pool, 4, v);
    for (int t = 0; t < 5; ++t) {
      const auto w = oracle::random_conv(rng, 8, 8, 3);
      const auto cached = solve_trial(designs, w);
      const Eigen::MatrixXd targets = pool->targets(w);
      double fresh = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const Eigen::MatrixXd a = designs[k].matrix();
        const Eigen::MatrixXd b = targets.middleCols(static_cast<Eigen::Index>(2 * k), 2);
        const Eigen::MatrixXd c = a.colPivHouseholderQr().solve(b);
        fresh += (b - a * c).squaredNorm();
      }
      fresh /= 12.0;
      CHECK(std::abs(cached.total - fresh) <= 1e-11 * fresh);
    }
  }
}

TEST_CASE("estimate_E: exact cases and normalization") {
  std::mt19937_64 rng(12);
  const auto pool = random_pool(rng, 30, 4, 8, 3);
  std::vector<StandardConv> trials;
  for (int t = 0; t < 4; ++t) trials.push_back(oracle::random_conv(rng, 4, 4, 3));

  double energy = 0.0, wsq = 0.0;
  for (const auto& w : trials) {
    energy += output_energy(*pool, w);
    wsq += std::pow(param_l2_norm(w), 2);
  }
  energy /= 4.0;
  wsq /= 4.0;

  for (Variant v : {Variant::GC, Variant::BGC}) {
    CHECK(estimate_E(trials, pool, 1, v).E <= 1e-12 * energy);
  }
  CHECK(estimate_E(trials, pool, 2, Variant::BGC).E <= 1e-10 * energy);

  const auto e = estimate_E(trials, pool, 4, Variant::GC);
  double mean_trial = 0.0;
  const auto designs = build_designs(pool, 4, Variant::GC);
  for (std::size_t t = 0; t < trials.size(); ++t) mean_trial += solve_trial(designs, trials[t]).total;
  mean_trial /= 4.0;
  CHECK(e.E == doctest::Approx(mean_trial).epsilon(1e-14));
  CHECK(e.norm_factor == doctest::Approx(wsq * pool->mean_squared_norm()).epsilon(1e-14));
  CHECK(e.rel_E == doctest::Approx(e.E / e.norm_factor).epsilon(1e-14));
  CHECK(e.output_energy == doctest::Approx(energy).epsilon(1e-12));

  CHECK_THROWS_AS(estimate_E(std::vector<StandardConv>{}, pool, 2, Variant::GC), ConfigError);
  CHECK_THROWS_AS(estimate_E(trials, pool, 3, Variant::GC), ConfigError);
}

TEST_CASE("BGC never does worse than GC") {
  std::mt19937_64 rng(13);
  const auto pool = random_pool(rng, 16, 8, 8, 3);
  std::vector<StandardConv> trials;
  for (int t = 0; t < 6; ++t) trials.push_back(oracle::random_conv(rng, 8, 8, 3));
  const std::vector<Cell> cells{{Variant::GC, 2}, {Variant::GC, 4}, {Variant::GC, 8},
                                {Variant::BGC, 2}, {Variant::BGC, 4}, {Variant::BGC, 8}};
  const auto r = estimate_sweep(pool, trials.size(),
                                [&](std::size_t t) { return trials[t]; }, cells);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.cells[3 + i].estimate.E <=
          r.cells[i].estimate.E + 1e-9 * r.norm_factor);
  }
}

TEST_CASE("estimate_sweep does not depend on the worker count") {
  std::mt19937_64 rng(14);
  const auto pool = random_pool(rng, 10, 8, 8, 3);
  std::vector<StandardConv> trials;
  for (int t = 0; t < 9; ++t) trials.push_back(oracle::random_conv(rng, 8, 8, 3));
  const std::vector<Cell> cells{{Variant::GC, 4}, {Variant::BGC, 4}};
  const auto factory = [&](std::size_t t) { return trials[t]; };
  const auto one = estimate_sweep(pool, trials.size(), factory, cells, 1);
  for (std::size_t workers : {2, 4, 8}) {
    const auto many = estimate_sweep(pool, trials.size(), factory, cells, workers);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      CHECK(many.cells[c].estimate.E == one.cells[c].estimate.E);
      CHECK(many.cells[c].estimate.rel_E == one.cells[c].estimate.rel_E);
    }
    CHECK(many.norm_factor == one.norm_factor);
  }
}

TEST_CASE("fit_slope recovers exact power laws") {
  std::vector<ScalePoint> pts;
  for (std::size_t N : {4, 8, 16, 32, 64}) {
    pts.push_back({N, 7.0 * std::pow(1.0 - 1.0 / static_cast<double>(N), 2.0)});
  }
  const auto fit = fit_slope(pts);
  CHECK(std::abs(fit.gamma - 2.0) <= 1e-9);
  CHECK(fit.C == doctest::Approx(7.0).epsilon(1e-9));

  for (auto& p : pts) p.E *= 3.0;
  const auto scaled = fit_slope(pts, 3.0);
  CHECK(scaled.C == doctest::Approx(7.0).epsilon(1e-9));
}

TEST_CASE("fit_slope excludes N = 1 and exact points") {
  std::vector<ScalePoint> pts{{1, 0.0}, {2, 1e-30}, {4, 0.75}, {8, 0.875}};
  const auto fit = fit_slope(pts, 1.0);
  CHECK(fit.used.size() == 2);
  CHECK(fit.excluded.size() == 2);
  CHECK(fit.gamma == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<ScalePoint> few{{1, 0.0}, {2, 1e-30}, {4, 0.5}};
  try {
    (void)fit_slope(few, 1.0);
    FAIL("expected SlopeFitError");
  } catch (const SlopeFitError& e) {
    CHECK(e.excluded().size() == 2);
    CHECK(std::string(e.what()).find("N=2") != std::string::npos);
  }
  const std::vector<ScalePoint> same{{4, 0.5}, {4, 0.6}};
  CHECK_THROWS_AS(fit_slope(same), SlopeFitError);
}

TEST_CASE("bound_ratio") {
  CHECK(bound_ratio(0.0, 8, 1) == 0.0);
  CHECK(bound_ratio(1e-3, 2, 1) == doctest::Approx(2e-3).epsilon(1e-15));
  CHECK(bound_ratio(1e-3, 2, 2) == doctest::Approx(4e-3).epsilon(1e-15));
  CHECK_THROWS_AS(bound_ratio(1e-3, 1, 1), std::domain_error);
  CHECK_THROWS_AS(bound_ratio(1e-3, 4, 3), std::domain_error);
  CHECK(bound_exponent(Variant::GC) == 1);
  CHECK(bound_exponent(Variant::BGC) == 2);
}

TEST_CASE("K/n energy bound: scalar case is an equality in expectation") {
  const auto r = check_lemma2_montecarlo(1, 1, 1, 1, 20000, 3);
  CHECK(std::abs(r.margin) <= 4.0 * r.lhs_stderr);
  CHECK(r.margin == doctest::Approx(r.rhs - r.lhs));
}

TEST_CASE("K/n energy bound: moderate shape") {
  const auto r = check_lemma2_montecarlo(16, 16, 3, 8, 400, 5);
  CHECK(r.lhs <= r.rhs + 4.0 * r.lhs_stderr);
}
