// hbfopt - hybrid beamforming experiment harness.
//
// Subcommands:
//   run <spec-file> [--key value ...]   run a sweep and emit CSV/manifest
//   channel-dump                        write one channel realization to disk
//   complexity                          Table-style multiply-count estimates
//   selftest                            quick invariant checks

#include <CLI11.hpp>
#include <iostream>

#include "hbf/experiment.hpp"
#include "hbf/testing.hpp"

namespace {

int cmd_run(const std::string& spec_path, const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0 || i + 1 == extras.size())
      throw hbf::SpecError("overrides must look like --section.key value, got '" + key + "'");
    overrides.emplace_back(key.substr(2), extras[++i]);
  }
  const hbf::ExperimentSpec spec = hbf::load_spec(spec_path, overrides);
  const hbf::ExperimentResult result = hbf::run_experiment(spec);
  hbf::emit(result, spec);
  int aborted = 0;
  for (const auto& row : result.rows)
    if (row.flags.find("abort") != std::string::npos) ++aborted;
  std::cout << "wrote " << result.rows.size() << " rows to " << spec.csv_path;
  if (aborted > 0) std::cout << " (" << aborted << " aborted runs flagged)";
  std::cout << "\n";
  return hbf::kExitOk;
}

int cmd_channel_dump(const hbf::SystemConfig& cfg, std::uint64_t seed,
                     const std::string& out) {
  const hbf::ChannelRealization ch = hbf::generate_channel(cfg, seed);
  hbf::dump_channel(ch, out);
  std::cout << "wrote " << ch.matrices.size() << " subcarrier matrices ("
            << cfg.n_rx << "x" << cfg.n_tx << ") to " << out << "\n";
  return hbf::kExitOk;
}

int cmd_complexity(double n_ant, double n_rf, double k_sub, const std::string& variant,
                   double n_in, double n_out, double n_g) {
  const hbf::AlgorithmVariant v = hbf::variant_from_name(variant, 1);
  const hbf::IterationCounts d = hbf::default_iteration_counts(v);
  if (n_in <= 0) n_in = d.n_in;
  if (n_out <= 0) n_out = d.n_out;
  if (n_g <= 0) n_g = d.n_g;
  const double c = hbf::complexity_estimate(n_ant, n_rf, k_sub, v, n_in, n_out, n_g);
  std::printf("%s: %.4g complex multiplications (n_in=%g, n_out=%g, n_g=%g)\n",
              v.name().c_str(), c, n_in, n_out, n_g);
  return hbf::kExitOk;
}

int cmd_selftest() {
  using namespace hbf;
  int failures = 0;
  const auto check = [&](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };

  {
    Rng rng(7);
    bool ok = true;
    for (int i = 0; i < 100; ++i) {
      const VecC a = ula_response(rng.uniform(0.0, kTwoPi), {16});
      ok = ok && std::abs(a.norm() - 1.0) < 1e-12;
    }
    check("ULA response unit norm", ok);
  }
  {
    const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 8);
    const ChannelRealization a = generate_channel(cfg, 3);
    const ChannelRealization b = generate_channel(cfg, 3);
    bool ok = true;
    for (int k = 0; k < cfg.n_subcarriers; ++k)
      ok = ok && a.matrices[k] == b.matrices[k];
    const cplx phi = std::polar(1.0, -kTwoPi / cfg.n_subcarriers);
    ok = ok && (a.matrices[1] - phi * a.matrices[0]).cwiseAbs().maxCoeff() < 1e-12;
    check("channel determinism and subcarrier relation", ok);
  }
  {
    const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 4, -2.0);
    const ChannelRealization ch = generate_channel(cfg, 11);
    bool ok = true;
    for (int s = 0; s < 5; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 100 + s);
      const double r4 = spectral_efficiency(ch, st, cfg).bits;
      const double r12 = analog_output_rate(ch, st.f_rf, st.f_d, st.w_rf, cfg);
      ok = ok && std::abs(r4 - r12) < 1e-8;
    }
    check("rate/WMMSE equivalence", ok);
  }
  {
    bool ok = true;
    const SystemConfig cfg = testing::small_config(8, 8, 2, 2, 2, 3);
    for (auto side : {SubproblemSide::Precoder, SubproblemSide::Combiner}) {
      const AnalogSubproblem sub = testing::random_subproblem(side, cfg, 21);
      AnalogBeamformer x(side == SubproblemSide::Precoder ? Side::Tx : Side::Rx, 8, 2);
      Rng rng(5);
      testing::randomize_phases(x, rng);
      ok = ok && testing::max_rel_gradient_error(euclidean_gradient(sub, x),
                                                 testing::fd_gradient(sub, x)) < 1e-5;
    }
    check("analog gradient vs finite differences", ok);
  }
  {
    bool ok = true;
    const SystemConfig cfg = testing::small_config(8, 8, 2, 2, 2, 3);
    const AnalogSubproblem sub =
        testing::random_subproblem(SubproblemSide::Precoder, cfg, 33);
    AnalogBeamformer x(Side::Tx, 8, 2);
    Rng rng(6);
    testing::randomize_phases(x, rng);
    const ScalarRatioFunction f = ei_coefficients(sub, x, 1, 2);
    for (int i = 0; i < 8; ++i) {
      const double th = i * kTwoPi / 8;
      AnalogBeamformer y = x;
      y.phases(2, 1) = th;
      ok = ok && std::abs(f.offset + f.value(th) - objective(sub, y)) < 1e-8;
    }
    check("element-iteration scalar slice matches objective", ok);
  }
  {
    const SystemConfig cfg = testing::small_config(16, 8, 4, 2, 2, 4, -4.0);
    const ChannelRealization ch = generate_channel(cfg, 17);
    HybridState st = testing::random_state(ch, cfg, 9);
    const PrecoderAux aux = make_precoder_aux(ch, st, cfg);
    bool ok = true;
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      auto [fd, xi] = optimal_digital_precoder(aux, st.f_rf, st.weights, k, cfg);
      ok = ok && std::abs(fd.squaredNorm() - double(cfg.n_tx_rf) / cfg.n_tx) < 1e-10 &&
           xi > 0.0;
    }
    check("digital precoder power equality", ok);
  }
  {
    bool ok = true;
    const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 4, -6.0);
    const ChannelRealization ch = generate_channel(cfg, 23);
    for (auto variant : {AlgorithmVariant::wmmse_ei(), AlgorithmVariant::wmmse_mo(),
                         AlgorithmVariant::mmse_ei()}) {
      try {
        const HybridState init = initialize(ch, cfg, InitStrategy::RandomIni, 23);
        const RunResult run = alternating_optimize(ch, cfg, variant, init, cfg.controls);
        const double fd = fd_baseline(ch, cfg);
        ok = ok && reported_rate(ch, run.state, cfg).bits <= fd + 1e-9;
      } catch (const MonotonicityError&) {
        ok = false;
      }
    }
    check("alternating optimization monotone and below FD bound", ok);
  }
  {
    const double ei = complexity_estimate(32, 4, 64, AlgorithmVariant::wmmse_ei(), 3, 10, 8.1);
    const double mo = complexity_estimate(32, 4, 64, AlgorithmVariant::wmmse_mo(), 21.2, 10);
    const double mm = complexity_estimate(32, 4, 64, AlgorithmVariant::mmse_ei(), 4, 5.2);
    const bool ok = std::abs(ei / 9.0e8 - 1.0) < 0.05 && std::abs(mo / 3.3e8 - 1.0) < 0.05 &&
                    std::abs(mm / 1.3e7 - 1.0) < 0.05;
    check("complexity estimates match reported figures", ok);
  }

  std::printf("%s\n", failures == 0 ? "selftest: all checks passed"
                                    : "selftest: FAILURES detected");
  return failures == 0 ? hbf::kExitOk : hbf::kExitInvariantAbort;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid beamforming design harness for partially-connected arrays"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment spec file");
  std::string spec_path;
  run->add_option("spec", spec_path, "spec file (key = value sections) or manifest JSON")
      ->required();
  run->allow_extras();

  auto* dump = app.add_subcommand("channel-dump", "write a channel realization to disk");
  hbf::SystemConfig dump_cfg;
  std::string dump_out = "channel.bin";
  std::uint64_t dump_seed = 1;
  std::string delay_mode = "verbatim";
  dump->add_option("--out", dump_out, "output path");
  dump->add_option("--n-tx", dump_cfg.n_tx);
  dump->add_option("--n-rx", dump_cfg.n_rx);
  dump->add_option("--n-subcarriers", dump_cfg.n_subcarriers);
  dump->add_option("--n-clusters", dump_cfg.cluster.n_clusters);
  dump->add_option("--n-rays", dump_cfg.cluster.n_rays);
  dump->add_option("--angle-spread", dump_cfg.cluster.angle_spread, "radians");
  dump->add_option("--delay-mode", delay_mode, "verbatim | delay-tap");
  dump->add_option("--max-delay-taps", dump_cfg.cluster.max_delay_taps);
  dump->add_option("--seed", dump_seed);

  auto* cx = app.add_subcommand("complexity", "multiply-count estimate for a variant");
  double cx_ant = 32, cx_rf = 4, cx_k = 64, cx_in = 0, cx_out = 0, cx_g = 0;
  std::string cx_variant = "wmmse-ei";
  cx->add_option("--n-ant", cx_ant);
  cx->add_option("--n-rf", cx_rf);
  cx->add_option("--k", cx_k);
  cx->add_option("--variant", cx_variant, "wmmse-ei | wmmse-mo | mmse-ei");
  cx->add_option("--n-in", cx_in, "inner iterations (default: reported average)");
  cx->add_option("--n-out", cx_out, "outer iterations (default: reported average)");
  cx->add_option("--n-g", cx_g, "line-search iterations (default: reported average)");

  auto* st = app.add_subcommand("selftest", "run quick invariant checks");
  (void)st;

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(spec_path, run->remaining());
    if (dump->parsed()) {
      dump_cfg.cluster.delay_mode =
          delay_mode == "delay-tap" ? hbf::DelayMode::DelayTap : hbf::DelayMode::Verbatim;
      return cmd_channel_dump(dump_cfg, dump_seed, dump_out);
    }
    if (cx->parsed())
      return cmd_complexity(cx_ant, cx_rf, cx_k, cx_variant, cx_in, cx_out, cx_g);
    return cmd_selftest();
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? hbf::kExitOk : hbf::kExitSpecError;
  } catch (const hbf::SpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return hbf::kExitSpecError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return hbf::kExitSpecError;
  } catch (const hbf::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return hbf::kExitIoError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return hbf::kExitInvariantAbort;
  }
}
