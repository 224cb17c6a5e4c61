#pragma once

// Test-only helpers: randomized states, subproblems and independent oracles
// used by the unit tests, the acceptance suite and the CLI selftest. Nothing
// here is part of the optimization path itself.

#include "hbf/driver.hpp"

namespace hbf::testing {

inline MatC random_complex(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatC m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.next_cgauss();
  return m;
}

inline MatC random_pd(Eigen::Index n, Rng& rng, double floor = 0.5) {
  const MatC a = random_complex(n, n, rng);
  MatC p = a * a.adjoint() / static_cast<double>(n) + floor * MatC::Identity(n, n);
  return 0.5 * (p + p.adjoint());
}

inline void randomize_phases(AnalogBeamformer& x, Rng& rng) {
  for (int q = 0; q < x.n_rf; ++q)
    for (int p = 0; p < x.block(); ++p) x.phases(p, q) = rng.uniform(0.0, kTwoPi);
}

/// Feasible state with random analog phases, power-tight random digital
/// precoders and random PD weights. The digital combiner is either the
/// Wiener solution or a plain random draw.
inline HybridState random_state(const ChannelRealization& channel,
                                const SystemConfig& config, std::uint64_t seed,
                                bool wiener_combiner = true,
                                bool identity_weights = false) {
  Rng rng(seed, 77);
  HybridState st;
  st.f_rf = AnalogBeamformer(Side::Tx, config.n_tx, config.n_tx_rf);
  st.w_rf = AnalogBeamformer(Side::Rx, config.n_rx, config.n_rx_rf);
  randomize_phases(st.f_rf, rng);
  randomize_phases(st.w_rf, rng);
  const int k_sub = config.n_subcarriers;
  const double budget = static_cast<double>(config.n_tx_rf) / config.n_tx;
  st.f_d.resize(k_sub);
  st.w_d.resize(k_sub);
  st.weights.resize(k_sub);
  st.xi.resize(k_sub);
  for (int k = 0; k < k_sub; ++k) {
    MatC fd = random_complex(config.n_tx_rf, config.n_streams, rng);
    st.f_d[k] = fd * std::sqrt(budget / fd.squaredNorm());
    st.xi(k) = rng.uniform(0.8, 1.25);
    st.weights[k] = identity_weights
                        ? MatC::Identity(config.n_streams, config.n_streams)
                        : random_pd(config.n_streams, rng);
    st.w_d[k] = random_complex(config.n_rx_rf, config.n_streams, rng);
  }
  if (wiener_combiner) {
    const CombinerAux aux = make_combiner_aux(channel, st, config);
    for (int k = 0; k < k_sub; ++k)
      st.w_d[k] = optimal_digital_combiner(aux, st.w_rf, k);
  }
  return st;
}

/// Small config used for solver-level tests; dims must satisfy the usual
/// divisibility constraints.
inline SystemConfig small_config(int n_tx, int n_rx, int n_tx_rf, int n_rx_rf,
                                 int n_streams, int k_sub, double snr_db = 0.0,
                                 std::uint64_t seed = 1) {
  SystemConfig cfg;
  cfg.n_tx = n_tx;
  cfg.n_rx = n_rx;
  cfg.n_tx_rf = n_tx_rf;
  cfg.n_rx_rf = n_rx_rf;
  cfg.n_streams = n_streams;
  cfg.n_subcarriers = k_sub;
  cfg.snr_db = snr_db;
  cfg.cluster.n_clusters = 3;
  cfg.cluster.n_rays = 4;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

inline AnalogSubproblem random_subproblem(SubproblemSide side, const SystemConfig& config,
                                          std::uint64_t seed) {
  const ChannelRealization ch = generate_channel(config, seed);
  const HybridState st = random_state(ch, config, seed ^ 0xABCDu);
  return build_subproblem(side, ch, st, config);
}

/// Central-difference oracle for the masked Euclidean gradient: the
/// Wirtinger derivative w.r.t. conj(X) is (d/dRe + j d/dIm)/2 of the ambient
/// objective, evaluated entry by entry on the block support.
inline MatC fd_gradient(const AnalogSubproblem& sub, const AnalogBeamformer& x,
                        double h = 1e-6) {
  const MatC x0 = x.expand();
  MatC g = MatC::Zero(sub.dim, sub.n_rf);
  const int blk = sub.block();
  for (int q = 0; q < sub.n_rf; ++q)
    for (int p = 0; p < blk; ++p) {
      const int r = q * blk + p;
      MatC xp = x0, xm = x0;
      xp(r, q) += h;
      xm(r, q) -= h;
      const double d_re = (objective_matrix(sub, xp) - objective_matrix(sub, xm)) / (2 * h);
      xp = x0;
      xm = x0;
      xp(r, q) += cplx(0.0, h);
      xm(r, q) -= cplx(0.0, h);
      const double d_im = (objective_matrix(sub, xp) - objective_matrix(sub, xm)) / (2 * h);
      g(r, q) = 0.5 * cplx(d_re, d_im);
    }
  return g;
}

inline double max_rel_gradient_error(const MatC& got, const MatC& want) {
  double worst = 0.0;
  const double scale = std::max(1e-12, want.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < got.cols(); ++j)
    for (Eigen::Index i = 0; i < got.rows(); ++i) {
      const double denom = std::max(std::abs(want(i, j)), 1e-3 * scale);
      worst = std::max(worst, std::abs(got(i, j) - want(i, j)) / denom);
    }
  return worst;
}

}  // namespace hbf::testing
