#include "bgc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include "bgc/errors.hpp"

namespace bgc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("invalid integer for " + key + ": '" + value + "'");
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  return parse_integer<std::size_t>(key, value);
}

std::optional<double> parse_optional_double(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

std::string join_groups(const std::vector<std::size_t>& groups) {
  std::string s;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(groups[i]);
  }
  return s;
}

std::string join_variants(const std::vector<Variant>& variants) {
  std::string s;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (i) s += ',';
    s += lower(to_string(variants[i]));
  }
  return s;
}

Variant parse_variant(const std::string& v) {
  const auto s = lower(trim(v));
  if (s == "gc") return Variant::GC;
  if (s == "bgc") return Variant::BGC;
  throw ConfigError("unknown variant '" + v + "' (expected gc or bgc)");
}

}  // namespace

std::string to_string(InputDistribution d) {
  return d == InputDistribution::Normal01 ? "normal" : "uniform";
}
std::string to_string(WeightInit i) {
  return i == WeightInit::He ? "he" : "glorot";
}
std::string to_string(Padding p) {
  return p == Padding::ZeroSame ? "zero" : "circular";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key,
                   const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = trim(raw_value);
  if (key == "m") {
    cfg.m = parse_count(key, value);
  } else if (key == "n") {
    cfg.n = parse_count(key, value);
  } else if (key == "K") {
    cfg.K = parse_count(key, value);
  } else if (key == "D") {
    cfg.D = parse_count(key, value);
  } else if (key == "S" || key == "S_trials") {
    cfg.S_trials = parse_count(key, value);
    if (key == "S") cfg.S_inputs = cfg.S_trials;
  } else if (key == "S_inputs") {
    cfg.S_inputs = parse_count(key, value);
  } else if (key == "groups") {
    cfg.groups.clear();
    for (const auto& part : split(value, ',')) {
      cfg.groups.push_back(parse_count(key, part));
    }
  } else if (key == "variant" || key == "variants") {
    cfg.variants.clear();
    for (const auto& part : split(value, ',')) {
      cfg.variants.push_back(parse_variant(part));
    }
  } else if (key == "dist") {
    const auto v = lower(value);
    if (v == "normal") {
      cfg.dist = InputDistribution::Normal01;
    } else if (v == "uniform") {
      cfg.dist = InputDistribution::UniformSym1;
    } else {
      throw ConfigError("unknown dist '" + value + "' (expected normal or uniform)");
    }
  } else if (key == "init") {
    const auto v = lower(value);
    if (v == "he") {
      cfg.init = WeightInit::He;
    } else if (v == "glorot") {
      cfg.init = WeightInit::Glorot;
    } else {
      throw ConfigError("unknown init '" + value + "' (expected he or glorot)");
    }
  } else if (key == "padding") {
    const auto v = lower(value);
    if (v == "zero") {
      cfg.padding = Padding::ZeroSame;
    } else if (v == "circular") {
      cfg.padding = Padding::Circular;
    } else {
      throw ConfigError("unknown padding '" + value + "' (expected zero or circular)");
    }
  } else if (key == "seed") {
    cfg.seed = parse_integer<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + raw_key + "'");
  }
}

void load_config(ExperimentConfig& cfg, std::istream& in) {
  static const std::string kEmbedded = "# config:";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = trim(line);
    if (body.rfind(kEmbedded, 0) == 0) {
      body = trim(body.substr(kEmbedded.size()));
    } else if (body.empty() || body.front() == '#') {
      continue;
    } else if (body.rfind("variant,", 0) == 0) {
      break;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not key=value: '" + line + "'");
    }
    apply_setting(cfg, body.substr(0, eq), body.substr(eq + 1));
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  load_config(cfg, in);
}

std::vector<std::string> config_lines(const ExperimentConfig& cfg) {
  return {
      "m=" + std::to_string(cfg.m),
      "n=" + std::to_string(cfg.n),
      "K=" + std::to_string(cfg.K),
      "D=" + std::to_string(cfg.D),
      "S=" + std::to_string(cfg.S_trials),
      "S_inputs=" + std::to_string(cfg.S_inputs),
      "groups=" + join_groups(cfg.groups),
      "variant=" + join_variants(cfg.variants),
      "dist=" + to_string(cfg.dist),
      "init=" + to_string(cfg.init),
      "padding=" + to_string(cfg.padding),
      "seed=" + std::to_string(cfg.seed),
  };
}

void validate(ExperimentConfig& cfg) {
  if (cfg.m == 0 || cfg.n == 0 || cfg.D == 0) {
    throw ConfigError("m, n and D must be positive");
  }
  if (cfg.K == 0 || cfg.K % 2 == 0) {
    throw ConfigError("K must be odd and positive, got " + std::to_string(cfg.K));
  }
  if (cfg.S_trials == 0 || cfg.S_inputs == 0) {
    throw ConfigError("S and S_inputs must be positive");
  }
  if (cfg.groups.empty()) throw ConfigError("groups list is empty");
  if (cfg.variants.empty()) throw ConfigError("variant list is empty");
  std::sort(cfg.groups.begin(), cfg.groups.end());
  cfg.groups.erase(std::unique(cfg.groups.begin(), cfg.groups.end()),
                   cfg.groups.end());
  std::sort(cfg.variants.begin(), cfg.variants.end());
  cfg.variants.erase(std::unique(cfg.variants.begin(), cfg.variants.end()),
                     cfg.variants.end());
  for (std::size_t N : cfg.groups) require_divisible(cfg.m, cfg.n, N);

  std::size_t unknowns = 0;
  for (Variant v : cfg.variants) {
    for (std::size_t N : cfg.groups) {
      const std::size_t u = (v == Variant::BGC ? 2 : 1) * cfg.K * (cfg.n / N);
      unknowns = std::max(unknowns, u);
    }
  }
  if (cfg.S_inputs * cfg.D < unknowns) {
    throw ConfigError("S_inputs*D = " + std::to_string(cfg.S_inputs * cfg.D) +
                      " is below the " + std::to_string(unknowns) +
                      " unknowns per output channel; increase S_inputs or D");
  }
}

const ApproximabilityReport* ExperimentResult::report(Variant v) const {
  for (const auto& r : reports) {
    if (r.variant == v) return &r;
  }
  return nullptr;
}

ExperimentResult run_experiment(ExperimentConfig cfg, std::size_t workers) {
  validate(cfg);

  std::vector<MultiChannelSignal> inputs;
  inputs.reserve(cfg.S_inputs);
  for (std::size_t s = 0; s < cfg.S_inputs; ++s) {
    inputs.push_back(sample_input({cfg.n, cfg.D}, cfg.dist,
                                  {cfg.seed, kInputStreamBase + s}));
  }
  auto pool = std::make_shared<const InputPool>(std::move(inputs), cfg.K,
                                                cfg.padding);

  std::vector<Cell> cells;
  for (Variant v : cfg.variants) {
    for (std::size_t N : cfg.groups) cells.push_back({v, N});
  }
  const TrialFactory trial = [&cfg](std::size_t t) {
    return init_standard_conv(cfg.m, cfg.n, cfg.K, cfg.init, {cfg.seed, t});
  };
  const SweepResult sweep =
      estimate_sweep(pool, cfg.S_trials, trial, cells, workers);

  ExperimentResult result;
  result.config = cfg;
  result.mean_param_sq = sweep.mean_param_sq;
  result.mean_input_sq = sweep.mean_input_sq;
  result.norm_factor = sweep.norm_factor;
  result.output_energy = sweep.output_energy;

  for (Variant v : cfg.variants) {
    ApproximabilityReport report;
    report.variant = v;
    std::vector<ScalePoint> points;
    for (const auto& ce : sweep.cells) {
      if (ce.cell.variant != v) continue;
      ReportRecord rec;
      rec.groups = ce.cell.groups;
      rec.E = ce.estimate.E;
      rec.rel_E = ce.estimate.rel_E;
      if (rec.groups >= 2) {
        rec.bound_ratio = bound_ratio(rec.rel_E, rec.groups, bound_exponent(v));
      }
      rec.runtime_ms = ce.runtime_ms;
      rec.flagged_trials = ce.estimate.flagged_trials;
      report.records.push_back(rec);
      points.push_back({rec.groups, rec.E});
    }
    try {
      report.fit = fit_slope(points, result.norm_factor);
    } catch (const SlopeFitError& e) {
      report.fit_warning = e.what();
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

ExperimentResult run_bound_experiment(ExperimentConfig cfg, std::size_t workers) {
  for (std::size_t N : cfg.groups) {
    if (N < 2) {
      throw ConfigError("bound experiment needs N >= 2; the ratio is undefined at N=1");
    }
  }
  return run_experiment(std::move(cfg), workers);
}

std::string summary_line(const ExperimentResult& r) {
  std::string s;
  for (const auto& rep : r.reports) {
    if (!s.empty()) s += ' ';
    s += "variant=" + to_string(rep.variant) + " gamma=" +
         (rep.fit ? format_double(rep.fit->gamma) : std::string("n/a"));
  }
  return s;
}

std::vector<std::string> bound_violations(const ExperimentResult& r) {
  std::vector<std::string> out;
  const double ceiling = r.reference_ceiling();
  for (const auto& rep : r.reports) {
    for (const auto& rec : rep.records) {
      if (rec.bound_ratio && *rec.bound_ratio > ceiling) {
        out.push_back("variant=" + to_string(rep.variant) +
                      " N=" + std::to_string(rec.groups) +
                      " bound_ratio=" + format_double(*rec.bound_ratio) +
                      " exceeds K/n=" + format_double(ceiling));
      }
    }
  }
  return out;
}

void write_csv(std::ostream& out, const ExperimentResult& r,
               const CsvOptions& options) {
  out << "# bgc approximability results\n";
  for (const auto& line : config_lines(r.config)) out << "# config: " << line << '\n';
  out << "# stat: mean_param_sq=" << format_double(r.mean_param_sq) << '\n';
  out << "# stat: mean_input_sq=" << format_double(r.mean_input_sq) << '\n';
  out << "# stat: norm_factor=" << format_double(r.norm_factor) << '\n';
  out << "# stat: reference_K_over_n=" << format_double(r.reference_ceiling())
      << '\n';
  out << "# summary: " << summary_line(r) << '\n';
  for (const auto& rep : r.reports) {
    if (!rep.fit_warning.empty()) {
      out << "# warning: variant=" << to_string(rep.variant) << ' '
          << rep.fit_warning << '\n';
    }
    if (rep.fit) {
      for (const auto& p : rep.fit->excluded) {
        out << "# excluded: variant=" << to_string(rep.variant)
            << " N=" << p.groups << " E=" << format_double(p.E) << '\n';
      }
    }
    for (const auto& rec : rep.records) {
      if (rec.flagged_trials > 0) {
        out << "# diagnostics: variant=" << to_string(rep.variant)
            << " N=" << rec.groups << " flagged_trials=" << rec.flagged_trials
            << " (rank-deficient design, minimum-norm solve)\n";
      }
    }
  }
  out << "variant,N,E,rel_E,bound_ratio,gamma,runtime_ms\n";
  for (const auto& rep : r.reports) {
    for (const auto& rec : rep.records) {
      out << to_string(rep.variant) << ',' << rec.groups << ','
          << format_double(rec.E) << ',' << format_double(rec.rel_E) << ',';
      if (rec.bound_ratio) out << format_double(*rec.bound_ratio);
      out << ',';
      if (rep.fit) out << format_double(rep.fit->gamma);
      out << ',';
      if (options.timing) out << format_double(rec.runtime_ms);
      out << '\n';
    }
  }
}

CsvResults read_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CsvResults results;
  {
    std::istringstream cfg_in(text);
    load_config(results.config, cfg_in);
  }
  std::istringstream rows_in(text);
  std::string line;
  bool header = false;
  while (std::getline(rows_in, line)) {
    line = trim(line);
    if (!header) {
      header = line == "variant,N,E,rel_E,bound_ratio,gamma,runtime_ms";
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw ConfigError("malformed CSV row: '" + line + "'");
    CsvRow row;
    row.variant = parse_variant(f[0]);
    row.groups = parse_count("N", f[1]);
    row.E = std::stod(f[2]);
    row.rel_E = std::stod(f[3]);
    row.bound_ratio = parse_optional_double(f[4]);
    row.gamma = parse_optional_double(f[5]);
    row.runtime_ms = parse_optional_double(f[6]);
    results.rows.push_back(row);
  }
  if (!header) throw ConfigError("CSV header not found");
  return results;
}

YoungSweep run_young_sweep(std::size_t m, std::size_t n, std::size_t K,
                           std::size_t D, std::size_t pairs, std::uint64_t seed,
                           WeightInit init, InputDistribution dist,
                           Padding padding) {
  YoungSweep out;
  for (std::size_t p = 0; p < pairs; ++p) {
    const StandardConv w = init_standard_conv(m, n, K, init, {seed, p});
    const MultiChannelSignal x =
        sample_input({n, D}, dist, {seed, kInputStreamBase + p});
    const YoungCheck c = check_young(w, x, padding);
    ++out.pairs;
    if (!c.holds) ++out.violations;
    if (c.rhs > 0.0) out.max_ratio = std::max(out.max_ratio, c.lhs / c.rhs);
  }
  return out;
}

}  // namespace bgc
