#pragma once

// Synthetic approximability experiments: configuration, sweeps over group
// counts, and the CSV / SVG result formats.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bgc/conv.hpp"
#include "bgc/estimator.hpp"
#include "bgc/sampling.hpp"

namespace bgc {

struct ExperimentConfig {
  std::size_t m = 256;
  std::size_t n = 256;
  std::size_t K = 3;
  std::size_t D = 32;
  std::size_t S_trials = 100;
  std::size_t S_inputs = 100;
  std::vector<std::size_t> groups{4, 8, 16, 32, 64};
  std::vector<Variant> variants{Variant::GC, Variant::BGC};
  InputDistribution dist = InputDistribution::Normal01;
  WeightInit init = WeightInit::He;
  Padding padding = Padding::ZeroSame;
  std::uint64_t seed = 0;
};

/// Applies one `key=value` setting. Keys: m n K D S S_inputs groups variant
/// dist init padding seed. `S` sets both the trial and the input count.
/// Throws ConfigError on unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value);

/// Reads settings from a config file: `key = value` lines, `#` comments.
/// Lines of the form `# config: key=value` are settings too, so a results CSV
/// is itself a valid config file; reading stops at the CSV header.
void load_config(ExperimentConfig& cfg, std::istream& in);
void load_config_file(ExperimentConfig& cfg, const std::string& path);

/// Resolved settings in apply_setting order, as `key=value` strings.
std::vector<std::string> config_lines(const ExperimentConfig& cfg);

/// Sorts and deduplicates groups and variants, then checks every invariant
/// before any computation: positive sizes, odd K, each N divides m and n, and
/// S_inputs * D covers the largest per-channel unknown count.
void validate(ExperimentConfig& cfg);

std::string to_string(InputDistribution d);
std::string to_string(WeightInit i);
std::string to_string(Padding p);

struct ReportRecord {
  std::size_t groups = 1;
  double E = 0.0;
  double rel_E = 0.0;
  std::optional<double> bound_ratio;
  double runtime_ms = 0.0;
  std::size_t flagged_trials = 0;
};

struct ApproximabilityReport {
  Variant variant = Variant::GC;
  std::vector<ReportRecord> records;  // sorted by N
  std::optional<SlopeFit> fit;
  std::string fit_warning;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ApproximabilityReport> reports;
  double mean_param_sq = 0.0;
  double mean_input_sq = 0.0;
  double norm_factor = 0.0;
  double output_energy = 0.0;

  double reference_ceiling() const {
    return static_cast<double>(config.K) / static_cast<double>(config.n);
  }
  const ApproximabilityReport* report(Variant v) const;
};

/// Draws the trials and input pool for `cfg` and estimates every
/// (variant, N) cell. The result does not depend on `workers`.
ExperimentResult run_experiment(ExperimentConfig cfg, std::size_t workers = 1);

/// run_experiment plus the bound-plot precondition that N = 1 is excluded.
ExperimentResult run_bound_experiment(ExperimentConfig cfg,
                                      std::size_t workers = 1);

/// "variant=GC gamma=1.02 variant=BGC gamma=2.1"; "n/a" where no fit exists.
std::string summary_line(const ExperimentResult& r);

/// Bound ratios above K/n, as human-readable lines.
std::vector<std::string> bound_violations(const ExperimentResult& r);

struct CsvOptions {
  bool timing = false;  // runtime_ms is left empty otherwise
};

/// Canonical results file: `#` comment lines carrying the config, statistics,
/// warnings and diagnostics, then `variant,N,E,rel_E,bound_ratio,gamma,runtime_ms`
/// and one row per (variant, N). Decimals use 17 significant digits.
void write_csv(std::ostream& out, const ExperimentResult& r,
               const CsvOptions& options = {});

struct CsvRow {
  Variant variant = Variant::GC;
  std::size_t groups = 1;
  double E = 0.0;
  double rel_E = 0.0;
  std::optional<double> bound_ratio;
  std::optional<double> gamma;
  std::optional<double> runtime_ms;
};

struct CsvResults {
  ExperimentConfig config;
  std::vector<CsvRow> rows;
};

CsvResults read_csv(std::istream& in);

/// Standalone SVG: log E against log(1 - 1/N) with fitted lines, and the bound
/// ratio against N with the K/n reference line.
void write_svg(std::ostream& out, const ExperimentResult& r);

struct YoungSweep {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // largest lhs / rhs seen
};

/// check_young over `pairs` independent (W, x) draws of one shape.
YoungSweep run_young_sweep(std::size_t m, std::size_t n, std::size_t K,
                           std::size_t D, std::size_t pairs, std::uint64_t seed,
                           WeightInit init = WeightInit::He,
                           InputDistribution dist = InputDistribution::Normal01,
                           Padding padding = Padding::ZeroSame);

std::string format_double(double v);

}  // namespace bgc
