#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hbf/driver.hpp"

namespace hbf {

// process exit codes shared with the CLI
inline constexpr int kExitOk = 0;
inline constexpr int kExitSpecError = 1;
inline constexpr int kExitIoError = 2;
inline constexpr int kExitInvariantAbort = 3;

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-form complex-multiplication counts for the analog optimization of
/// each algorithm family; cubic inversion terms are counted as N_rf^3.
inline double complexity_estimate(double n_ant, double n_rf, double k_sub,
                                  const AlgorithmVariant& variant, double n_in,
                                  double n_out, double n_g = 0.0) {
  if (n_ant <= 0 || n_rf <= 0 || k_sub <= 0 || n_in <= 0 || n_out <= 0)
    throw std::invalid_argument("complexity_estimate: inputs must be positive");
  const double a2 = n_ant * n_ant, r2 = n_rf * n_rf, r3 = n_rf * n_rf * n_rf;
  switch (variant.kind) {
    case VariantKind::WmmseEi:
    case VariantKind::WmmseEiQ:
      return n_out * n_in * n_ant * k_sub *
             (2 * a2 * n_rf + 3 * n_ant * r2 + 4 * a2 + 2 * n_ant + 3 * r3 - r2 -
              n_ant * n_rf + n_g + 2 * r3);
    case VariantKind::WmmseMo:
    case VariantKind::WmmseMoU:
      return n_out * n_in *
             (k_sub * (5 * a2 * n_rf + 6 * n_ant * r2 + 4 * r3 + 4 * r3) +
              3 * n_ant * n_rf + n_ant);
    case VariantKind::MmseEi:
    case VariantKind::MmseEiQ:
      return n_out * n_in *
             (k_sub * (2 * a2 * n_rf + 3 * n_ant * r2 + r3 + r3) + a2);
  }
  return 0.0;
}

/// Paper-reported average iteration counts used as estimator defaults.
struct IterationCounts {
  double n_in, n_out, n_g;
};
inline IterationCounts default_iteration_counts(const AlgorithmVariant& v) {
  switch (v.kind) {
    case VariantKind::WmmseEi:
    case VariantKind::WmmseEiQ: return {3.0, 10.0, 8.1};
    case VariantKind::WmmseMo:
    case VariantKind::WmmseMoU: return {21.2, 10.0, 0.0};
    case VariantKind::MmseEi:
    case VariantKind::MmseEiQ: return {4.0, 5.2, 0.0};
  }
  return {1.0, 1.0, 0.0};
}

struct ExperimentSpec {
  SystemConfig base;
  std::vector<double> snr_grid{0.0};
  std::vector<std::string> variants{"wmmse-ei"};
  int n_realizations = 1;
  InitStrategy init_strategy = InitStrategy::RandomIni;
  std::vector<int> quant_grid;  // empty = run variants as listed
  StepOrder step_order = StepOrder::PrecoderFirst;
  std::string csv_path = "results.csv";
  std::string manifest_path = "manifest.json";
  std::string traces_dir;  // empty = no per-run traces
  int workers = 0;         // 0 = hardware concurrency

  void validate() const {
    base.validate();
    if (snr_grid.empty()) throw SpecError("experiment: snr_grid must be non-empty");
    if (variants.empty()) throw SpecError("experiment: variants must be non-empty");
    if (n_realizations < 1) throw SpecError("experiment: n_realizations must be >= 1");
    for (int b : quant_grid)
      if (b < 1) throw SpecError("experiment: quant_grid entries must be >= 1");
    for (const auto& v : variants) variant_from_name(v, 1);  // name check
  }
};

struct ResultRow {
  std::string variant;
  std::uint64_t seed = 0;
  double snr_db = 0.0;
  int quant_bits = 0;  // 0 = unquantized ("inf" in the CSV)
  int outer_iters = 0;
  double rate = 0.0;
  double fd_rate = 0.0;
  double wall_ms = 0.0;
  std::string flags = "-";
};

struct RunTrace {
  std::string variant;
  std::uint64_t seed = 0;
  double snr_db = 0.0;
  int quant_bits = 0;
  ConvergenceTrace trace;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<RunTrace> traces;  // populated only when traces_dir is set
};

namespace detail {

/// Base variants are promoted to their quantized counterparts when a
/// quantization grid is present.
inline AlgorithmVariant resolve_variant(const std::string& name,
                                        const std::optional<int>& cfg_bits,
                                        std::optional<int> grid_bits) {
  if (grid_bits) {
    if (name == "wmmse-ei") return AlgorithmVariant::wmmse_ei_q(*grid_bits);
    if (name == "wmmse-mo") return AlgorithmVariant::wmmse_mo_u(*grid_bits);
    if (name == "mmse-ei") return AlgorithmVariant::mmse_ei_q(*grid_bits);
    return variant_from_name(name, *grid_bits);
  }
  AlgorithmVariant v = variant_from_name(name, cfg_bits.value_or(0));
  if (v.quantized() && v.bits < 1)
    throw SpecError("variant " + name + " needs quant_bits or a quant_grid");
  return v;
}

inline std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace detail

/// Runs the full sweep: |snr_grid| x |variants| x n_realizations x
/// max(1, |quant_grid|) optimization runs. Realization i always uses channel
/// seed base.seed + i, shared across variants and SNRs (common random
/// numbers), and rows come back sorted by (variant, bits, snr, seed) so the
/// output never depends on scheduling.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int n_real = spec.n_realizations;
  const int n_snr = static_cast<int>(spec.snr_grid.size());
  const int n_var = static_cast<int>(spec.variants.size());
  const int n_bits = spec.quant_grid.empty() ? 1 : static_cast<int>(spec.quant_grid.size());

  // channels and their per-subcarrier mode gains, computed once
  struct ChannelData {
    ChannelRealization ch;
    std::vector<VecR> mode_gains;  // K of N_s, squared singular values
  };
  std::vector<ChannelData> channels(n_real);
  for (int i = 0; i < n_real; ++i) {
    channels[i].ch = generate_channel(spec.base, spec.base.seed + i);
    channels[i].mode_gains.reserve(spec.base.n_subcarriers);
    for (const auto& h : channels[i].ch.matrices) {
      Eigen::JacobiSVD<MatC> svd(h);
      channels[i].mode_gains.push_back(
          svd.singularValues().head(spec.base.n_streams).array().square());
    }
  }

  struct Task {
    int var_idx, snr_idx, bits_idx, real_idx;
  };
  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(n_var) * n_snr * n_bits * n_real);
  for (int v = 0; v < n_var; ++v)
    for (int b = 0; b < n_bits; ++b)
      for (int s = 0; s < n_snr; ++s)
        for (int r = 0; r < n_real; ++r) tasks.push_back({v, s, b, r});

  ExperimentResult result;
  result.rows.resize(tasks.size());
  const bool keep_traces = !spec.traces_dir.empty();
  if (keep_traces) result.traces.resize(tasks.size());

  const auto run_task = [&](std::size_t t) {
    const Task& task = tasks[t];
    SystemConfig cfg = spec.base;
    cfg.snr_db = spec.snr_grid[task.snr_idx];
    const std::optional<int> grid_bits =
        spec.quant_grid.empty() ? std::nullopt
                                : std::optional<int>(spec.quant_grid[task.bits_idx]);
    const AlgorithmVariant variant =
        detail::resolve_variant(spec.variants[task.var_idx], cfg.quant_bits, grid_bits);
    const ChannelData& cd = channels[task.real_idx];
    const std::uint64_t seed = spec.base.seed + task.real_idx;

    ResultRow row;
    row.variant = variant.name();
    row.seed = seed;
    row.snr_db = cfg.snr_db;
    row.quant_bits = variant.quantized() ? variant.bits : 0;
    double fd = 0.0;
    for (const auto& gains : cd.mode_gains) {
      const VecR p = water_fill(gains, cfg.noise_var(), 1.0);
      for (Eigen::Index i = 0; i < gains.size(); ++i)
        fd += std::log2(1.0 + p(i) * gains(i) / cfg.noise_var());
    }
    row.fd_rate = fd / cfg.n_subcarriers;

    const auto t0 = std::chrono::steady_clock::now();
    ConvergenceTrace trace;
    try {
      const HybridState init = initialize(cd.ch, cfg, spec.init_strategy, seed);
      RunResult run =
          alternating_optimize(cd.ch, cfg, variant, init, cfg.controls, spec.step_order);
      trace = std::move(run.trace);
      const RateResult rr = reported_rate(cd.ch, run.state, cfg);
      row.rate = rr.bits;
      if (rr.degenerate) row.flags = "degenerate";
    } catch (const MonotonicityError& e) {
      trace = e.trace;
      row.rate = trace.steps.empty() ? 0.0 : trace.steps.back().rate;
      row.flags = "monotonicity-abort";
    }
    row.outer_iters = trace.outer_iterations();
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.rows[t] = std::move(row);
    if (keep_traces)
      result.traces[t] = {result.rows[t].variant, seed, cfg.snr_db,
                          result.rows[t].quant_bits, std::move(trace)};
  };

  int workers = spec.workers > 0 ? spec.workers
                                 : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1))
          run_task(t);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const ResultRow& ra = result.rows[a];
    const ResultRow& rb = result.rows[b];
    return std::tie(ra.variant, ra.quant_bits, ra.snr_db, ra.seed) <
           std::tie(rb.variant, rb.quant_bits, rb.snr_db, rb.seed);
  });
  ExperimentResult sorted;
  sorted.rows.reserve(order.size());
  for (std::size_t idx : order) sorted.rows.push_back(std::move(result.rows[idx]));
  if (keep_traces) {
    sorted.traces.reserve(order.size());
    for (std::size_t idx : order) sorted.traces.push_back(std::move(result.traces[idx]));
  }
  return sorted;
}

inline std::string csv_header() {
  return "variant,seed,snr_db,quant_bits,outer_iters,rate,fd_rate,wall_ms,flags";
}

inline std::string row_to_csv(const ResultRow& r) {
  std::ostringstream os;
  os << r.variant << ',' << r.seed << ',' << detail::format_double(r.snr_db, "%g") << ','
     << (r.quant_bits > 0 ? std::to_string(r.quant_bits) : std::string("inf")) << ','
     << r.outer_iters << ',' << detail::format_double(r.rate, "%.12g") << ','
     << detail::format_double(r.fd_rate, "%.12g") << ','
     << detail::format_double(r.wall_ms, "%.3f") << ',' << r.flags;
  return os.str();
}

// --- manifest (JSON echo of the fully resolved spec) ----------------------

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  const SystemConfig& c = spec.base;
  j["system"] = {{"n_tx", c.n_tx},
                 {"n_rx", c.n_rx},
                 {"n_tx_rf", c.n_tx_rf},
                 {"n_rx_rf", c.n_rx_rf},
                 {"n_streams", c.n_streams},
                 {"n_subcarriers", c.n_subcarriers},
                 {"seed", c.seed}};
  if (c.quant_bits) j["system"]["quant_bits"] = *c.quant_bits;
  j["channel"] = {{"n_clusters", c.cluster.n_clusters},
                  {"n_rays", c.cluster.n_rays},
                  {"angle_spread", c.cluster.angle_spread},
                  {"delay_mode",
                   c.cluster.delay_mode == DelayMode::Verbatim ? "verbatim" : "delay-tap"},
                  {"max_delay_taps", c.cluster.max_delay_taps}};
  j["solver"] = {{"outer_cap", c.controls.outer_cap},
                 {"outer_rel_tol", c.controls.outer_rel_tol},
                 {"ei_sweep_cap", c.controls.ei_sweep_cap},
                 {"ei_rel_tol", c.controls.ei_rel_tol},
                 {"mo_iter_cap", c.controls.mo_iter_cap},
                 {"mo_grad_tol", c.controls.mo_grad_tol},
                 {"line_search_tol", c.controls.line_search_tol},
                 {"step_order", spec.step_order == StepOrder::PrecoderFirst
                                    ? "precoder-first"
                                    : "combiner-first"}};
  j["experiment"] = {
      {"snr_grid", spec.snr_grid},
      {"variants", spec.variants},
      {"n_realizations", spec.n_realizations},
      {"init", spec.init_strategy == InitStrategy::RandomIni ? "random" : "mmse"},
      {"quant_grid", spec.quant_grid},
      {"workers", spec.workers}};
  j["output"] = {{"csv", spec.csv_path},
                 {"manifest", spec.manifest_path},
                 {"traces", spec.traces_dir}};
  return j;
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  try {
    const auto& sys = j.at("system");
    spec.base.n_tx = sys.at("n_tx").get<int>();
    spec.base.n_rx = sys.at("n_rx").get<int>();
    spec.base.n_tx_rf = sys.at("n_tx_rf").get<int>();
    spec.base.n_rx_rf = sys.at("n_rx_rf").get<int>();
    spec.base.n_streams = sys.at("n_streams").get<int>();
    spec.base.n_subcarriers = sys.at("n_subcarriers").get<int>();
    spec.base.seed = sys.at("seed").get<std::uint64_t>();
    if (sys.contains("quant_bits")) spec.base.quant_bits = sys.at("quant_bits").get<int>();
    const auto& ch = j.at("channel");
    spec.base.cluster.n_clusters = ch.at("n_clusters").get<int>();
    spec.base.cluster.n_rays = ch.at("n_rays").get<int>();
    spec.base.cluster.angle_spread = ch.at("angle_spread").get<double>();
    spec.base.cluster.delay_mode = ch.at("delay_mode").get<std::string>() == "verbatim"
                                       ? DelayMode::Verbatim
                                       : DelayMode::DelayTap;
    spec.base.cluster.max_delay_taps = ch.at("max_delay_taps").get<int>();
    const auto& so = j.at("solver");
    spec.base.controls.outer_cap = so.at("outer_cap").get<int>();
    spec.base.controls.outer_rel_tol = so.at("outer_rel_tol").get<double>();
    spec.base.controls.ei_sweep_cap = so.at("ei_sweep_cap").get<int>();
    spec.base.controls.ei_rel_tol = so.at("ei_rel_tol").get<double>();
    spec.base.controls.mo_iter_cap = so.at("mo_iter_cap").get<int>();
    spec.base.controls.mo_grad_tol = so.at("mo_grad_tol").get<double>();
    spec.base.controls.line_search_tol = so.at("line_search_tol").get<double>();
    spec.step_order = so.at("step_order").get<std::string>() == "combiner-first"
                          ? StepOrder::CombinerFirst
                          : StepOrder::PrecoderFirst;
    const auto& ex = j.at("experiment");
    spec.snr_grid = ex.at("snr_grid").get<std::vector<double>>();
    spec.variants = ex.at("variants").get<std::vector<std::string>>();
    spec.n_realizations = ex.at("n_realizations").get<int>();
    spec.init_strategy = ex.at("init").get<std::string>() == "mmse"
                             ? InitStrategy::MmseIni
                             : InitStrategy::RandomIni;
    spec.quant_grid = ex.at("quant_grid").get<std::vector<int>>();
    spec.workers = ex.at("workers").get<int>();
    const auto& out = j.at("output");
    spec.csv_path = out.at("csv").get<std::string>();
    spec.manifest_path = out.at("manifest").get<std::string>();
    spec.traces_dir = out.at("traces").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("manifest: ") + e.what());
  }
  return spec;
}

// --- flat key = value spec files ------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw SpecError("bad value for " + key + ": '" + v + "'");
  return out;
}

/// "a,b,c" or matlab-style "lo:step:hi" ranges.
inline std::vector<double> parse_grid(const std::string& v, const std::string& key) {
  if (v.find(':') != std::string::npos) {
    const auto parts = split(v, ':');
    if (parts.size() != 3) throw SpecError("bad range for " + key + ": '" + v + "'");
    const double lo = parse_number<double>(parts[0], key);
    const double step = parse_number<double>(parts[1], key);
    const double hi = parse_number<double>(parts[2], key);
    if (step <= 0.0) throw SpecError("range step must be positive for " + key);
    std::vector<double> out;
    for (double x = lo; x <= hi + 1e-12; x += step) out.push_back(x);
    return out;
  }
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_number<double>(item, key));
  return out;
}

}  // namespace detail

/// Flat sectioned "key = value" experiment file. Unknown keys are an error;
/// every omitted key keeps its default, and the manifest echoes them all.
inline ExperimentSpec parse_spec_text(std::istream& in,
                                      const std::vector<std::pair<std::string, std::string>>&
                                          overrides = {}) {
  ExperimentSpec spec;
  std::map<std::string, std::string> kv;
  std::string line, section;
  while (std::getline(in, line)) {
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SpecError("bad spec line: '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    if (section.empty()) throw SpecError("key outside any section: '" + key + "'");
    kv[section + "." + key] = detail::trim(line.substr(eq + 1));
  }
  for (const auto& [k, v] : overrides) kv[k] = v;

  for (const auto& [key, value] : kv) {
    SystemConfig& c = spec.base;
    if (value.empty()) continue;  // empty value = keep default
    if (key == "system.n_tx") c.n_tx = detail::parse_number<int>(value, key);
    else if (key == "system.n_rx") c.n_rx = detail::parse_number<int>(value, key);
    else if (key == "system.n_tx_rf") c.n_tx_rf = detail::parse_number<int>(value, key);
    else if (key == "system.n_rx_rf") c.n_rx_rf = detail::parse_number<int>(value, key);
    else if (key == "system.n_streams") c.n_streams = detail::parse_number<int>(value, key);
    else if (key == "system.n_subcarriers")
      c.n_subcarriers = detail::parse_number<int>(value, key);
    else if (key == "system.seed") c.seed = detail::parse_number<std::uint64_t>(value, key);
    else if (key == "system.quant_bits") c.quant_bits = detail::parse_number<int>(value, key);
    else if (key == "channel.n_clusters")
      c.cluster.n_clusters = detail::parse_number<int>(value, key);
    else if (key == "channel.n_rays") c.cluster.n_rays = detail::parse_number<int>(value, key);
    else if (key == "channel.angle_spread")
      c.cluster.angle_spread = detail::parse_number<double>(value, key);
    else if (key == "channel.delay_mode") {
      if (value == "verbatim") c.cluster.delay_mode = DelayMode::Verbatim;
      else if (value == "delay-tap") c.cluster.delay_mode = DelayMode::DelayTap;
      else throw SpecError("channel.delay_mode must be verbatim or delay-tap");
    } else if (key == "channel.max_delay_taps")
      c.cluster.max_delay_taps = detail::parse_number<int>(value, key);
    else if (key == "solver.outer_cap")
      c.controls.outer_cap = detail::parse_number<int>(value, key);
    else if (key == "solver.outer_rel_tol")
      c.controls.outer_rel_tol = detail::parse_number<double>(value, key);
    else if (key == "solver.ei_sweep_cap")
      c.controls.ei_sweep_cap = detail::parse_number<int>(value, key);
    else if (key == "solver.ei_rel_tol")
      c.controls.ei_rel_tol = detail::parse_number<double>(value, key);
    else if (key == "solver.mo_iter_cap")
      c.controls.mo_iter_cap = detail::parse_number<int>(value, key);
    else if (key == "solver.mo_grad_tol")
      c.controls.mo_grad_tol = detail::parse_number<double>(value, key);
    else if (key == "solver.line_search_tol")
      c.controls.line_search_tol = detail::parse_number<double>(value, key);
    else if (key == "solver.step_order") {
      if (value == "precoder-first") spec.step_order = StepOrder::PrecoderFirst;
      else if (value == "combiner-first") spec.step_order = StepOrder::CombinerFirst;
      else throw SpecError("solver.step_order must be precoder-first or combiner-first");
    } else if (key == "experiment.snr_grid")
      spec.snr_grid = detail::parse_grid(value, key);
    else if (key == "experiment.variants")
      spec.variants = detail::split(value, ',');
    else if (key == "experiment.n_realizations")
      spec.n_realizations = detail::parse_number<int>(value, key);
    else if (key == "experiment.init") {
      if (value == "random") spec.init_strategy = InitStrategy::RandomIni;
      else if (value == "mmse") spec.init_strategy = InitStrategy::MmseIni;
      else throw SpecError("experiment.init must be random or mmse");
    } else if (key == "experiment.quant_grid") {
      spec.quant_grid.clear();
      for (double b : detail::parse_grid(value, key))
        spec.quant_grid.push_back(static_cast<int>(b));
    } else if (key == "experiment.workers")
      spec.workers = detail::parse_number<int>(value, key);
    else if (key == "output.csv") spec.csv_path = value;
    else if (key == "output.manifest") spec.manifest_path = value;
    else if (key == "output.traces") spec.traces_dir = value;
    else throw SpecError("unknown spec key: " + key);
  }
  return spec;
}

inline ExperimentSpec load_spec(const std::string& path,
                                const std::vector<std::pair<std::string, std::string>>&
                                    overrides = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file: " + path);
  // manifests are accepted anywhere a spec file is
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw SpecError(std::string("manifest parse: ") + e.what());
    }
    if (!overrides.empty())
      throw SpecError("flag overrides are not supported with a manifest input");
    return spec_from_json(j);
  }
  return parse_spec_text(in, overrides);
}

/// Writes the results CSV, the resolved-spec manifest, and (when a traces
/// directory is configured) one JSON trace per run.
inline void emit(const ExperimentResult& result, const ExperimentSpec& spec) {
  if (result.rows.empty()) throw SpecError("emit: no result rows");
  {
    std::ofstream csv(spec.csv_path);
    if (!csv) throw IoError("cannot write CSV: " + spec.csv_path);
    csv << csv_header() << '\n';
    for (const auto& row : result.rows) csv << row_to_csv(row) << '\n';
    if (!csv) throw IoError("short write: " + spec.csv_path);
  }
  if (!spec.manifest_path.empty()) {
    std::ofstream mf(spec.manifest_path);
    if (!mf) throw IoError("cannot write manifest: " + spec.manifest_path);
    mf << spec_to_json(spec).dump(2) << '\n';
  }
  if (!spec.traces_dir.empty()) {
    for (const auto& rt : result.traces) {
      nlohmann::json j;
      j["variant"] = rt.variant;
      j["seed"] = rt.seed;
      j["snr_db"] = rt.snr_db;
      j["quant_bits"] = rt.quant_bits;
      j["exit"] =
          rt.trace.exit_reason == ExitReason::Converged ? "converged" : "max-iterations";
      auto& steps = j["steps"] = nlohmann::json::array();
      for (const auto& s : rt.trace.steps)
        steps.push_back({{"label", to_string(s.label)},
                         {"outer", s.outer},
                         {"J", s.objective},
                         {"R", s.rate}});
      std::ostringstream name;
      name << spec.traces_dir << "/" << rt.variant << "_b" << rt.quant_bits << "_snr"
           << detail::format_double(rt.snr_db, "%g") << "_seed" << rt.seed << ".json";
      std::ofstream tf(name.str());
      if (!tf) throw IoError("cannot write trace: " + name.str());
      tf << j.dump(2) << '\n';
    }
  }
}

}  // namespace hbf
