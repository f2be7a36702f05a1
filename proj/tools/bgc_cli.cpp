// Command-line driver for the synthetic approximability experiments and the
// analytical cost model.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 --assert-bounds failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "bgc/cost_model.hpp"
#include "bgc/errors.hpp"
#include "bgc/estimator.hpp"
#include "bgc/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAssert = 4;

// Experiment flags, kept as strings and fed through bgc::apply_setting so that
// the config file and the command line share one parser.
struct ExperimentFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> settings;
  std::string out;
  bool svg = false;
  bool timing = false;
  bool assert_bounds = false;
  std::size_t workers = 1;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f,
                          std::vector<std::pair<std::string, CLI::Option*>>& opts,
                          std::vector<std::string>& values) {
  static const std::vector<std::pair<std::string, std::string>> kKeys = {
      {"m", "output channels"},
      {"n", "input channels"},
      {"K", "taps per kernel (odd)"},
      {"D", "samples per channel"},
      {"S", "weight trials (also sets S-inputs unless given)"},
      {"S-inputs", "input samples"},
      {"groups", "comma-separated group counts, e.g. 4,8,16,32,64"},
      {"variant", "gc, bgc or gc,bgc"},
      {"dist", "normal or uniform"},
      {"init", "he or glorot"},
      {"padding", "zero or circular"},
      {"seed", "64-bit seed"},
  };
  values.resize(kKeys.size());
  cmd->add_option("--config", f.config_path,
                  "config file (key=value lines); flags override it");
  for (std::size_t i = 0; i < kKeys.size(); ++i) {
    opts.emplace_back(kKeys[i].first,
                      cmd->add_option("--" + kKeys[i].first, values[i],
                                      kKeys[i].second));
  }
  cmd->add_option("--out", f.out, "CSV output path (stdout if omitted)");
  cmd->add_flag("--svg", f.svg, "also write an SVG next to --out");
  cmd->add_flag("--timing", f.timing, "fill the runtime_ms column");
  cmd->add_flag("--assert-bounds", f.assert_bounds,
                "exit 4 if any bound ratio exceeds K/n");
  cmd->add_option("--workers", f.workers, "worker threads")
      ->check(CLI::PositiveNumber);
}

bgc::ExperimentConfig resolve_config(
    const ExperimentFlags& f,
    const std::vector<std::pair<std::string, CLI::Option*>>& opts,
    const std::vector<std::string>& values) {
  bgc::ExperimentConfig cfg;
  if (!f.config_path.empty()) bgc::load_config_file(cfg, f.config_path);
  for (std::size_t i = 0; i < opts.size(); ++i) {
    if (opts[i].second->count() > 0) {
      bgc::apply_setting(cfg, opts[i].first, values[i]);
    }
  }
  bgc::validate(cfg);
  return cfg;
}

int write_outputs(const bgc::ExperimentResult& result, const ExperimentFlags& f) {
  const bgc::CsvOptions csv{f.timing};
  if (f.out.empty()) {
    if (f.svg) throw bgc::ConfigError("--svg needs --out");
    bgc::write_csv(std::cout, result, csv);
    std::cerr << bgc::summary_line(result) << '\n';
  } else {
    std::ofstream out(f.out);
    if (!out) throw bgc::ConfigError("cannot write '" + f.out + "'");
    bgc::write_csv(out, result, csv);
    if (f.svg) {
      const auto svg_path = std::filesystem::path(f.out).replace_extension(".svg");
      std::ofstream svg(svg_path);
      if (!svg) throw bgc::ConfigError("cannot write '" + svg_path.string() + "'");
      bgc::write_svg(svg, result);
    }
    std::cout << bgc::summary_line(result) << '\n';
  }
  for (const auto& rep : result.reports) {
    if (!rep.fit_warning.empty()) {
      std::cerr << "warning: variant=" << bgc::to_string(rep.variant) << ' '
                << rep.fit_warning << '\n';
    }
  }
  if (f.assert_bounds) {
    const auto violations = bgc::bound_violations(result);
    for (const auto& v : violations) std::cerr << "bound violated: " << v << '\n';
    if (!violations.empty()) return kExitAssert;
  }
  return kExitOk;
}

bgc::LayerVariant parse_layer_variant(const std::string& s) {
  if (s == "standard") return bgc::LayerVariant::Standard;
  if (s == "gc") return bgc::LayerVariant::GC;
  if (s == "bgc") return bgc::LayerVariant::BGC;
  throw bgc::ConfigError("unknown variant '" + s + "' (expected standard, gc or bgc)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped and balanced grouped convolution approximability tools"};
  app.require_subcommand(1);

  ExperimentFlags scale_flags;
  std::vector<std::pair<std::string, CLI::Option*>> scale_opts;
  std::vector<std::string> scale_values;
  auto* scale = app.add_subcommand(
      "scale", "sweep N, estimate E for each variant and fit the slope gamma");
  add_experiment_flags(scale, scale_flags, scale_opts, scale_values);

  ExperimentFlags bound_flags;
  std::vector<std::pair<std::string, CLI::Option*>> bound_opts;
  std::vector<std::string> bound_values;
  auto* bound = app.add_subcommand(
      "bound", "sweep N and report Rel.E / (1 - 1/N)^p against K/n");
  add_experiment_flags(bound, bound_flags, bound_opts, bound_values);

  bgc::LayerSpec layer;
  std::string layer_variant = "standard";
  auto* cost = app.add_subcommand("cost", "parameter and operation counts");
  cost->add_option("--variant", layer_variant, "standard, gc or bgc");
  cost->add_option("--m", layer.m, "output channels");
  cost->add_option("--n", layer.n, "input channels");
  cost->add_option("--K", layer.K, "taps per kernel");
  cost->add_option("--D", layer.D, "samples per channel");
  cost->add_option("--N", layer.N, "groups (ignored for standard)");

  ExperimentFlags lemma_flags;
  std::vector<std::pair<std::string, CLI::Option*>> lemma_opts;
  std::vector<std::string> lemma_values;
  std::size_t pairs = 1000;
  auto* lemma = app.add_subcommand(
      "lemma-check", "Young-type inequality sweep and Monte Carlo K/n check");
  add_experiment_flags(lemma, lemma_flags, lemma_opts, lemma_values);
  lemma->add_option("--pairs", pairs, "random (W, x) pairs for the Young sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*scale) {
      const auto cfg = resolve_config(scale_flags, scale_opts, scale_values);
      return write_outputs(bgc::run_experiment(cfg, scale_flags.workers),
                           scale_flags);
    }
    if (*bound) {
      const auto cfg = resolve_config(bound_flags, bound_opts, bound_values);
      return write_outputs(bgc::run_bound_experiment(cfg, bound_flags.workers),
                           bound_flags);
    }
    if (*cost) {
      layer.variant = parse_layer_variant(layer_variant);
      if (layer.variant == bgc::LayerVariant::Standard) layer.N = 1;
      const bgc::CostBreakdown c = bgc::op_count(layer);
      std::cout << "variant    " << layer_variant << '\n'
                << "params     " << c.param_count << '\n'
                << "conv_ops   " << c.conv_ops << '\n'
                << "mean_ops   " << c.mean_ops << '\n'
                << "total_ops  " << c.total_ops << '\n';
      return kExitOk;
    }
    if (*lemma) {
      const auto cfg = resolve_config(lemma_flags, lemma_opts, lemma_values);
      const auto young = bgc::run_young_sweep(cfg.m, cfg.n, cfg.K, cfg.D, pairs,
                                              cfg.seed, cfg.init, cfg.dist,
                                              cfg.padding);
      const auto mc = bgc::check_lemma2_montecarlo(
          cfg.m, cfg.n, cfg.K, cfg.D, cfg.S_trials, cfg.seed, cfg.init,
          cfg.dist, cfg.padding);
      std::cout << "young pairs=" << young.pairs
                << " violations=" << young.violations
                << " max_lhs_over_rhs=" << bgc::format_double(young.max_ratio)
                << '\n'
                << "energy lhs=" << bgc::format_double(mc.lhs)
                << " rhs=" << bgc::format_double(mc.rhs)
                << " margin=" << bgc::format_double(mc.margin)
                << " lhs_stderr=" << bgc::format_double(mc.lhs_stderr) << '\n';
      const bool ok = young.violations == 0 && mc.lhs <= mc.rhs + 4.0 * mc.lhs_stderr;
      return lemma_flags.assert_bounds && !ok ? kExitAssert : kExitOk;
    }
  } catch (const bgc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bgc::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bgc::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
