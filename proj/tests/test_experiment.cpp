#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "bgc/errors.hpp"
#include "bgc/experiment.hpp"

using namespace bgc;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.m = 8;
  cfg.n = 8;
  cfg.K = 3;
  cfg.D = 8;
  cfg.S_trials = 6;
  cfg.S_inputs = 6;
  cfg.groups = {2, 4, 8};
  cfg.seed = 11;
  return cfg;
}

std::string csv_of(const ExperimentResult& r, CsvOptions opt = {}) {
  std::ostringstream out;
  write_csv(out, r, opt);
  return out.str();
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig cfg;
  CHECK(cfg.m == 256);
  CHECK(cfg.n == 256);
  CHECK(cfg.K == 3);
  CHECK(cfg.S_trials == 100);
  CHECK(cfg.groups == std::vector<std::size_t>{4, 8, 16, 32, 64});
  CHECK(cfg.variants == std::vector<Variant>{Variant::GC, Variant::BGC});
}

TEST_CASE("apply_setting parses every key") {
  ExperimentConfig cfg;
  apply_setting(cfg, "m", "16");
  apply_setting(cfg, "n", "32");
  apply_setting(cfg, "K", "5");
  apply_setting(cfg, "D", "12");
  apply_setting(cfg, "S", "40");
  CHECK(cfg.S_trials == 40);
  CHECK(cfg.S_inputs == 40);
  apply_setting(cfg, "S-inputs", "50");
  CHECK(cfg.S_inputs == 50);
  CHECK(cfg.S_trials == 40);
  apply_setting(cfg, "groups", "8, 2,4");
  CHECK(cfg.groups == std::vector<std::size_t>{8, 2, 4});
  apply_setting(cfg, "variant", "bgc");
  CHECK(cfg.variants == std::vector<Variant>{Variant::BGC});
  apply_setting(cfg, "dist", "uniform");
  CHECK(cfg.dist == InputDistribution::UniformSym1);
  apply_setting(cfg, "init", "glorot");
  CHECK(cfg.init == WeightInit::Glorot);
  apply_setting(cfg, "padding", "circular");
  CHECK(cfg.padding == Padding::Circular);
  apply_setting(cfg, "seed", "18446744073709551615");
  CHECK(cfg.seed == 18446744073709551615ULL);
  CHECK(cfg.m == 16);
  CHECK(cfg.K == 5);
  CHECK(cfg.D == 12);
}

TEST_CASE("apply_setting rejects bad input") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(apply_setting(cfg, "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "m", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "m", "-3"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "dist", "cauchy"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "variant", "dense"), ConfigError);
}

TEST_CASE("config file with comments; later settings win") {
  std::istringstream in(
      "# sweep\n"
      "m = 64\n"
      "n=64\n"
      "\n"
      "groups = 2,4\n"
      "m = 32   \n");
  ExperimentConfig cfg;
  load_config(cfg, in);
  CHECK(cfg.m == 32);
  CHECK(cfg.n == 64);
  CHECK(cfg.groups == std::vector<std::size_t>{2, 4});

  std::istringstream bad("m 64\n");
  CHECK_THROWS_AS(load_config(cfg, bad), ConfigError);
  CHECK_THROWS_AS(load_config_file(cfg, "/nonexistent/bgc.cfg"), ConfigError);
}

TEST_CASE("validate sorts groups and rejects bad configurations") {
  ExperimentConfig cfg = small_config();
  cfg.groups = {8, 2, 4, 2};
  validate(cfg);
  CHECK(cfg.groups == std::vector<std::size_t>{2, 4, 8});

  ExperimentConfig even = small_config();
  even.K = 4;
  CHECK_THROWS_AS(validate(even), ConfigError);

  ExperimentConfig indiv = small_config();
  indiv.groups = {3};
  CHECK_THROWS_WITH_AS(validate(indiv), doctest::Contains("group count 3"), ConfigError);

  ExperimentConfig under = small_config();
  under.S_inputs = 1;
  under.D = 4;
  under.groups = {1};
  CHECK_THROWS_WITH_AS(validate(under), doctest::Contains("unknowns"), ConfigError);

  ExperimentConfig empty = small_config();
  empty.groups.clear();
  CHECK_THROWS_AS(validate(empty), ConfigError);
}

TEST_CASE("bound experiment rejects N = 1") {
  ExperimentConfig cfg = small_config();
  cfg.groups = {1, 2};
  CHECK_THROWS_AS(run_bound_experiment(cfg), ConfigError);
}

TEST_CASE("run_experiment: report structure") {
  const auto r = run_experiment(small_config());
  REQUIRE(r.reports.size() == 2);
  for (const auto& rep : r.reports) {
    REQUIRE(rep.records.size() == 3);
    CHECK(rep.records[0].groups == 2);
    CHECK(rep.records[2].groups == 8);
    for (const auto& rec : rep.records) {
      REQUIRE(rec.bound_ratio.has_value());
      CHECK(rec.rel_E == doctest::Approx(rec.E / r.norm_factor).epsilon(1e-14));
    }
  }
  CHECK(r.report(Variant::GC)->fit.has_value());
  // BGC at N = 2 is exact and drops out of the fit.
  const auto& bgc_fit = r.report(Variant::BGC)->fit;
  REQUIRE(bgc_fit.has_value());
  CHECK(bgc_fit->excluded.size() == 1);
  CHECK(bgc_fit->used.size() == 2);
  CHECK(r.reference_ceiling() == doctest::Approx(3.0 / 8.0));
  CHECK(summary_line(r).find("variant=GC gamma=") == 0);
}

TEST_CASE("a single group gives a warning and no slope") {
  ExperimentConfig cfg = small_config();
  cfg.groups = {1};
  const auto r = run_experiment(cfg);
  for (const auto& rep : r.reports) {
    CHECK_FALSE(rep.fit.has_value());
    CHECK_FALSE(rep.fit_warning.empty());
    CHECK_FALSE(rep.records[0].bound_ratio.has_value());
  }
  CHECK(summary_line(r) == "variant=GC gamma=n/a variant=BGC gamma=n/a");
  const std::string csv = csv_of(r);
  CHECK(csv.find("# warning: variant=GC") != std::string::npos);
  CHECK(csv.find("GC,1,") != std::string::npos);
}

TEST_CASE("CSV layout") {
  const auto r = run_experiment(small_config());
  const std::string csv = csv_of(r);
  CHECK(csv.find("\nvariant,N,E,rel_E,bound_ratio,gamma,runtime_ms\n") != std::string::npos);
  CHECK(csv.find("# config: seed=11\n") != std::string::npos);
  CHECK(csv.find("# config: groups=2,4,8\n") != std::string::npos);
  CHECK(csv.find("# excluded: variant=BGC N=2") != std::string::npos);

  std::istringstream lines(csv);
  std::string line;
  int rows = 0;
  bool body = false;
  while (std::getline(lines, line)) {
    if (body) {
      ++rows;
      CHECK(line.back() == ',');  // runtime_ms empty without timing
    }
    body = body || line.rfind("variant,", 0) == 0;
  }
  CHECK(rows == 6);

  const std::string timed = csv_of(r, {true});
  CHECK(timed.find("\nGC,2,") != std::string::npos);
  CHECK(timed.substr(timed.size() - 2) != ",\n");
}

TEST_CASE("CSV round trip preserves every value exactly") {
  const auto r = run_experiment(small_config());
  std::istringstream in(csv_of(r));
  const CsvResults back = read_csv(in);
  REQUIRE(back.rows.size() == 6);
  std::size_t i = 0;
  for (const auto& rep : r.reports) {
    for (const auto& rec : rep.records) {
      const CsvRow& row = back.rows[i++];
      CHECK(row.variant == rep.variant);
      CHECK(row.groups == rec.groups);
      CHECK(row.E == rec.E);
      CHECK(row.rel_E == rec.rel_E);
      CHECK(row.bound_ratio == rec.bound_ratio);
      REQUIRE(row.gamma.has_value());
      CHECK(*row.gamma == rep.fit->gamma);
      CHECK_FALSE(row.runtime_ms.has_value());
    }
  }
  CHECK(config_lines(back.config) == config_lines(r.config));
}

TEST_CASE("a results file re-runs to the identical results file") {
  ExperimentConfig cfg = small_config();
  cfg.dist = InputDistribution::UniformSym1;
  cfg.padding = Padding::Circular;
  cfg.init = WeightInit::Glorot;
  const std::string first = csv_of(run_experiment(cfg));

  ExperimentConfig echoed;
  std::istringstream in(first);
  load_config(echoed, in);
  CHECK(csv_of(run_experiment(echoed, 3)) == first);
}

TEST_CASE("results do not depend on the worker count") {
  const std::string one = csv_of(run_experiment(small_config(), 1));
  CHECK(csv_of(run_experiment(small_config(), 4)) == one);
  CHECK(csv_of(run_experiment(small_config(), 8)) == one);
}

TEST_CASE("different seeds give different results") {
  ExperimentConfig other = small_config();
  other.seed = 12;
  CHECK(run_experiment(other).reports[0].records[0].E !=
        run_experiment(small_config()).reports[0].records[0].E);
}

TEST_CASE("bound violations are reported against K/n") {
  auto r = run_experiment(small_config());
  CHECK(bound_violations(r).empty());
  r.reports[0].records[1].bound_ratio = 1.0;
  const auto v = bound_violations(r);
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("variant=GC N=4") == 0);
}

TEST_CASE("SVG output carries both panels and the fitted slopes") {
  const auto r = run_experiment(small_config());
  std::ostringstream out;
  write_svg(out, r);
  const std::string svg = out.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("id=\"scale-GC\"") != std::string::npos);
  CHECK(svg.find("id=\"scale-BGC\"") != std::string::npos);
  CHECK(svg.find("id=\"bound-GC\"") != std::string::npos);
  CHECK(svg.find("class=\"reference\"") != std::string::npos);
  CHECK(svg.find("slope") != std::string::npos);
}

TEST_CASE("Young sweep") {
  const auto y = run_young_sweep(4, 4, 3, 6, 200, 1);
  CHECK(y.pairs == 200);
  CHECK(y.violations == 0);
  CHECK(y.max_ratio <= 1.0);
  CHECK(y.max_ratio > 0.0);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
