#pragma once

#include <Eigen/SVD>
#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "hbf/analog.hpp"

namespace hbf {

enum class VariantKind { WmmseEi, WmmseMo, MmseEi, WmmseEiQ, MmseEiQ, WmmseMoU };

struct AlgorithmVariant {
  VariantKind kind = VariantKind::WmmseEi;
  int bits = 0;  // quantized kinds only, >= 1

  static AlgorithmVariant wmmse_ei() { return {VariantKind::WmmseEi, 0}; }
  static AlgorithmVariant wmmse_mo() { return {VariantKind::WmmseMo, 0}; }
  static AlgorithmVariant mmse_ei() { return {VariantKind::MmseEi, 0}; }
  static AlgorithmVariant wmmse_ei_q(int b) { return {VariantKind::WmmseEiQ, b}; }
  static AlgorithmVariant mmse_ei_q(int b) { return {VariantKind::MmseEiQ, b}; }
  static AlgorithmVariant wmmse_mo_u(int b) { return {VariantKind::WmmseMoU, b}; }

  bool mmse_weights() const {
    return kind == VariantKind::MmseEi || kind == VariantKind::MmseEiQ;
  }
  bool quantized_sweeps() const {
    return kind == VariantKind::WmmseEiQ || kind == VariantKind::MmseEiQ;
  }
  bool quantized() const { return quantized_sweeps() || kind == VariantKind::WmmseMoU; }
  bool uses_mo() const {
    return kind == VariantKind::WmmseMo || kind == VariantKind::WmmseMoU;
  }

  std::string name() const {
    switch (kind) {
      case VariantKind::WmmseEi: return "wmmse-ei";
      case VariantKind::WmmseMo: return "wmmse-mo";
      case VariantKind::MmseEi: return "mmse-ei";
      case VariantKind::WmmseEiQ: return "wmmse-ei-q";
      case VariantKind::MmseEiQ: return "mmse-ei-q";
      case VariantKind::WmmseMoU: return "wmmse-mo-u";
    }
    return "?";
  }

  void validate() const {
    if (quantized() && bits < 1)
      throw std::invalid_argument("variant: quantized kinds need bits >= 1");
  }
};

inline AlgorithmVariant variant_from_name(const std::string& name, int bits = 0) {
  if (name == "wmmse-ei") return AlgorithmVariant::wmmse_ei();
  if (name == "wmmse-mo") return AlgorithmVariant::wmmse_mo();
  if (name == "mmse-ei") return AlgorithmVariant::mmse_ei();
  if (name == "wmmse-ei-q") return AlgorithmVariant::wmmse_ei_q(bits);
  if (name == "mmse-ei-q") return AlgorithmVariant::mmse_ei_q(bits);
  if (name == "wmmse-mo-u") return AlgorithmVariant::wmmse_mo_u(bits);
  throw std::invalid_argument("unknown algorithm variant: " + name);
}

enum class StepLabel { S1Precoder, S2Combiner, S3Weights };
enum class ExitReason { Converged, MaxIterations };
enum class StepOrder { PrecoderFirst, CombinerFirst };
enum class InitStrategy { RandomIni, MmseIni };

inline const char* to_string(StepLabel l) {
  switch (l) {
    case StepLabel::S1Precoder: return "S1_precoder";
    case StepLabel::S2Combiner: return "S2_combiner";
    case StepLabel::S3Weights: return "S3_weights";
  }
  return "?";
}

struct TraceStep {
  StepLabel label;
  int outer = 0;
  double objective = 0.0;  // weighted-MSE objective J
  double rate = 0.0;       // bits/s/Hz
};

/// Step-by-step record of one optimization run. The objective sequence is
/// non-increasing within 1e-9 slack for every variant, and the rate sampled
/// at each weight update is non-decreasing within the same slack; the driver
/// aborts on violation. The rate contract is tied to the weight update (the
/// MMSE variants keep unit weights and carry no such guarantee: coordinate
/// descent on the summed MSE trades eigenvalues in ways that can lower the
/// log-det rate between iterations).
struct ConvergenceTrace {
  std::vector<TraceStep> steps;
  ExitReason exit_reason = ExitReason::MaxIterations;

  int outer_iterations() const {
    return steps.empty() ? 0 : steps.back().outer + 1;
  }
};

struct MonotonicityError : std::runtime_error {
  MonotonicityError(const std::string& msg, ConvergenceTrace partial)
      : std::runtime_error(msg), trace(std::move(partial)) {}
  ConvergenceTrace trace;  // steps recorded before the violation
};

inline constexpr double kMonotoneSlack = 1e-9;

/// Water-filling power allocation: maximizes sum log(1 + p_i g_i / noise)
/// subject to sum p_i = power, p_i >= 0. Returns the per-mode powers.
inline VecR water_fill(const VecR& gains, double noise_var, double power) {
  const Eigen::Index n = gains.size();
  std::vector<double> inv(n);
  for (Eigen::Index i = 0; i < n; ++i)
    inv[i] = gains(i) > 0.0 ? noise_var / gains(i) : std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return inv[a] < inv[b]; });
  VecR powers = VecR::Zero(n);
  for (Eigen::Index m = n; m >= 1; --m) {
    if (std::isinf(inv[order[m - 1]])) continue;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) sum += inv[order[i]];
    const double level = (power + sum) / m;
    if (level > inv[order[m - 1]]) {
      for (Eigen::Index i = 0; i < m; ++i) powers(order[i]) = level - inv[order[i]];
      break;
    }
  }
  return powers;
}

/// Fully-digital benchmark: per subcarrier, top-N_s singular modes of H_k
/// with unit transmit power water-filled across them.
inline double fd_baseline(const ChannelRealization& channel, const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  const int ns = config.n_streams;
  double bits = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    Eigen::JacobiSVD<MatC> svd(channel.matrices[k]);
    const VecR gains = svd.singularValues().head(ns).array().square();
    const VecR p = water_fill(gains, config.noise_var(), 1.0);
    for (int i = 0; i < ns; ++i)
      bits += std::log2(1.0 + p(i) * gains(i) / config.noise_var());
  }
  return bits / k_sub;
}

namespace detail {

inline AnalogBeamformer solve_analog(const AlgorithmVariant& variant,
                                     const AnalogSubproblem& sub,
                                     const AnalogBeamformer& x0,
                                     const SolverControls& ctl) {
  if (variant.uses_mo())
    return mo_solve(sub, x0, {ctl.mo_iter_cap, ctl.mo_grad_tol}).x;
  if (variant.quantized_sweeps())
    return iterate_to_tolerance(sub, x0, ctl.ei_sweep_cap, ctl.ei_rel_tol,
                                [&](const AnalogBeamformer& x) {
                                  return ei_pass_quantized(sub, x, variant.bits);
                                });
  return iterate_to_tolerance(sub, x0, ctl.ei_sweep_cap, ctl.ei_rel_tol,
                              [&](const AnalogBeamformer& x) {
                                return ei_pass(sub, x, ctl.line_search_tol);
                              });
}

inline void refresh_digital_precoder(const ChannelRealization& channel,
                                     HybridState& state, const SystemConfig& config) {
  const PrecoderAux aux = make_precoder_aux(channel, state, config);
  for (int k = 0; k < config.n_subcarriers; ++k) {
    auto [fd, xi] = optimal_digital_precoder(aux, state.f_rf, state.weights, k, config);
    state.f_d[k] = std::move(fd);
    state.xi(k) = xi;
  }
}

inline void refresh_digital_combiner(const ChannelRealization& channel,
                                     HybridState& state, const SystemConfig& config) {
  const CombinerAux aux = make_combiner_aux(channel, state, config);
  for (int k = 0; k < config.n_subcarriers; ++k)
    state.w_d[k] = optimal_digital_combiner(aux, state.w_rf, k);
}

}  // namespace detail

/// Rate used for the convergence trace and the stop rule. The analog-output
/// form is exact for the monotonicity argument and coincides with the full
/// spectral efficiency whenever N_r^RF = N_s and the digital combiner is
/// invertible.
inline double trace_rate(const ChannelRealization& channel, const HybridState& state,
                         const SystemConfig& config) {
  return analog_output_rate(channel, state.f_rf, state.f_d, state.w_rf, config);
}

/// Rate reported to the outside: full spectral efficiency when the digital
/// combiner is square, analog-output rate otherwise.
inline RateResult reported_rate(const ChannelRealization& channel,
                                const HybridState& state, const SystemConfig& config) {
  if (config.n_rx_rf == config.n_streams)
    return spectral_efficiency(channel, state, config);
  return {trace_rate(channel, state, config), false};
}

/// Fresh starting state. RandomIni draws analog phases uniformly, sets the
/// digital combiners to identity columns (so beta_k > 0), unit weights and
/// scaling, then fills the digital precoders with their closed-form update.
/// MmseIni instead runs the low-complexity MMSE-EI algorithm to convergence
/// and re-weights its final state.
inline HybridState initialize(const ChannelRealization& channel,
                              const SystemConfig& config, InitStrategy strategy,
                              std::uint64_t seed);

struct RunResult {
  HybridState state;
  ConvergenceTrace trace;
};

/// Alternating optimization (three steps per outer iteration):
///   1. analog precoder via the variant's solver, then F_D,k and xi_k;
///   2. analog combiner via the same solver, then W_D,k;
///   3. weights Lambda_k = E_k^{-1} (skipped by the MMSE variants).
/// CombinerFirst order runs combiner, weights, precoder, updating the weight
/// matrix immediately after the combiner so the rate stays non-decreasing.
/// Exits when the relative rate change drops below outer_rel_tol or at the
/// iteration cap. WmmseMoU optimizes unquantized and projects the phases
/// onto the 2^bits grid once on exit (digital parts then refreshed).
inline RunResult alternating_optimize(const ChannelRealization& channel,
                                      const SystemConfig& config,
                                      const AlgorithmVariant& variant,
                                      const HybridState& init,
                                      const SolverControls& controls,
                                      StepOrder order = StepOrder::PrecoderFirst) {
  config.validate();
  variant.validate();
  HybridState state = init;
  if (variant.quantized_sweeps()) {
    state.f_rf = quantize_phases(state.f_rf, variant.bits);
    state.w_rf = quantize_phases(state.w_rf, variant.bits);
  }

  ConvergenceTrace trace;
  double last_j = std::numeric_limits<double>::infinity();
  double last_sampled_rate = -std::numeric_limits<double>::infinity();

  const auto record = [&](StepLabel label, int outer, bool rate_sample) {
    TraceStep step;
    step.label = label;
    step.outer = outer;
    step.objective = wmmse_objective(channel, state, config);
    step.rate = trace_rate(channel, state, config);
    if (step.objective > last_j + kMonotoneSlack)
      throw MonotonicityError("objective increased at outer " + std::to_string(outer) +
                                  " step " + to_string(label) + ": " +
                                  std::to_string(last_j) + " -> " +
                                  std::to_string(step.objective),
                              trace);
    last_j = step.objective;
    if (rate_sample) {
      if (step.rate < last_sampled_rate - kMonotoneSlack)
        throw MonotonicityError("rate decreased at outer " + std::to_string(outer) +
                                    ": " + std::to_string(last_sampled_rate) + " -> " +
                                    std::to_string(step.rate),
                                trace);
      last_sampled_rate = step.rate;
    }
    trace.steps.push_back(step);
  };

  const auto precoder_step = [&](int outer) {
    const AnalogSubproblem sub =
        build_subproblem(SubproblemSide::Precoder, channel, state, config);
    state.f_rf = detail::solve_analog(variant, sub, state.f_rf, controls);
    detail::refresh_digital_precoder(channel, state, config);
    record(StepLabel::S1Precoder, outer, false);
  };
  const auto combiner_step = [&](int outer) {
    const AnalogSubproblem sub =
        build_subproblem(SubproblemSide::Combiner, channel, state, config);
    state.w_rf = detail::solve_analog(variant, sub, state.w_rf, controls);
    detail::refresh_digital_combiner(channel, state, config);
    record(StepLabel::S2Combiner, outer, false);
  };
  const auto weights_step = [&](int outer) {
    for (int k = 0; k < config.n_subcarriers; ++k)
      state.weights[k] = optimal_weight(mse_matrix(channel, state, config, k));
    record(StepLabel::S3Weights, outer, true);
  };

  double rate_prev = trace_rate(channel, state, config);
  for (int outer = 0; outer < controls.outer_cap; ++outer) {
    if (order == StepOrder::PrecoderFirst) {
      precoder_step(outer);
      combiner_step(outer);
      if (!variant.mmse_weights()) weights_step(outer);
    } else {
      combiner_step(outer);
      if (!variant.mmse_weights()) weights_step(outer);
      precoder_step(outer);
    }
    const double rate_now = trace.steps.back().rate;
    if (std::abs(rate_now - rate_prev) <=
        controls.outer_rel_tol * std::max(std::abs(rate_now), 1e-12)) {
      trace.exit_reason = ExitReason::Converged;
      break;
    }
    rate_prev = rate_now;
  }

  if (variant.kind == VariantKind::WmmseMoU) {
    state.f_rf = quantize_phases(state.f_rf, variant.bits);
    state.w_rf = quantize_phases(state.w_rf, variant.bits);
    detail::refresh_digital_precoder(channel, state, config);
    detail::refresh_digital_combiner(channel, state, config);
  }
  return {std::move(state), std::move(trace)};
}

inline HybridState initialize(const ChannelRealization& channel,
                              const SystemConfig& config, InitStrategy strategy,
                              std::uint64_t seed) {
  config.validate();
  const int k_sub = config.n_subcarriers;
  HybridState st;
  st.f_rf = AnalogBeamformer(Side::Tx, config.n_tx, config.n_tx_rf);
  st.w_rf = AnalogBeamformer(Side::Rx, config.n_rx, config.n_rx_rf);
  Rng ftx(seed, streams::kInitPrecoder), frx(seed, streams::kInitCombiner);
  for (int q = 0; q < st.f_rf.n_rf; ++q)
    for (int p = 0; p < st.f_rf.block(); ++p) st.f_rf.phases(p, q) = ftx.uniform(0.0, kTwoPi);
  for (int q = 0; q < st.w_rf.n_rf; ++q)
    for (int p = 0; p < st.w_rf.block(); ++p) st.w_rf.phases(p, q) = frx.uniform(0.0, kTwoPi);

  st.w_d.assign(k_sub, MatC::Identity(config.n_rx_rf, config.n_streams));
  st.weights.assign(k_sub, MatC::Identity(config.n_streams, config.n_streams));
  st.xi = VecR::Ones(k_sub);
  st.f_d.assign(k_sub, MatC::Zero(config.n_tx_rf, config.n_streams));
  detail::refresh_digital_precoder(channel, st, config);

  if (strategy == InitStrategy::RandomIni) return st;

  RunResult warm = alternating_optimize(channel, config, AlgorithmVariant::mmse_ei(),
                                        st, config.controls);
  for (int k = 0; k < k_sub; ++k)
    warm.state.weights[k] = optimal_weight(mse_matrix(channel, warm.state, config, k));
  return std::move(warm.state);
}

}  // namespace hbf
