#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "hbf/channel.hpp"
#include "hbf/types.hpp"

namespace hbf {

inline constexpr double kLn2 = 0.6931471805599453;

/// log(det(S)) for Hermitian positive-definite S, natural log.
inline double logdet_hpd(const MatC& s) {
  Eigen::LLT<MatC> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("logdet_hpd: matrix not positive definite");
  double ld = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    ld += std::log(llt.matrixL()(i, i).real());
  return 2.0 * ld;
}

struct RateResult {
  double bits = 0.0;
  bool degenerate = false;  // combiner Gram matrix needed jitter
};

/// Average spectral efficiency over subcarriers, bits/s/Hz:
/// (1/K) sum_k log2 |I + (1/sigma^2) W^H H F F^H H^H W (W^H W)^{-1}|.
/// A combiner Gram matrix singular beyond 1e-12 gets a 1e-12 diagonal
/// jitter and raises the degeneracy flag instead of failing.
inline RateResult spectral_efficiency(const ChannelRealization& channel,
                                      const HybridState& state,
                                      const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  const double inv_noise = 1.0 / config.noise_var();
  const MatC f_rf = state.f_rf.expand();
  const MatC w_rf = state.w_rf.expand();
  RateResult out;
  double nats = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    const MatC f = f_rf * state.f_d[k];
    const MatC w = w_rf * state.w_d[k];
    MatC gram = w.adjoint() * w;
    const MatC a = w.adjoint() * (channel.matrices[k] * f);  // N_s x N_s
    Eigen::SelfAdjointEigenSolver<MatC> es(gram, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-12) {
      gram += 1e-12 * MatC::Identity(gram.rows(), gram.cols());
      out.degenerate = true;
    }
    // log|I + c A A^H S^{-1}| = log|S + c A A^H| - log|S|, both HPD
    nats += logdet_hpd(gram + inv_noise * (a * a.adjoint())) - logdet_hpd(gram);
  }
  out.bits = nats / (k_sub * kLn2);
  return out;
}

/// Rate at the analog combiner output, bits/s/Hz:
/// (1/K) sum_k log2 |I + N_r^RF/(sigma^2 M) W_RF^H H F F^H H^H W_RF|.
/// This is the reported rate when N_r^RF > N_s.
inline double analog_output_rate(const ChannelRealization& channel,
                                 const AnalogBeamformer& f_rf_in,
                                 const std::vector<MatC>& f_d,
                                 const AnalogBeamformer& w_rf_in,
                                 const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  const double c = config.n_rx_rf / (config.noise_var() * config.n_rx);
  const MatC f_rf = f_rf_in.expand();
  const MatC w_rf = w_rf_in.expand();
  const MatC eye = MatC::Identity(config.n_rx_rf, config.n_rx_rf);
  double nats = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    const MatC t = w_rf.adjoint() * (channel.matrices[k] * (f_rf * f_d[k]));
    nats += logdet_hpd(eye + c * (t * t.adjoint()));
  }
  return nats / (k_sub * kLn2);
}

/// Modified MSE matrix for subcarrier k:
/// E_k = I - (1/xi) F^H H^H W - (1/xi) W^H H F
///       + (1/xi^2) (sigma^2 W^H W + W^H H F F^H H^H W).
inline MatC mse_matrix(const ChannelRealization& channel, const HybridState& state,
                       const SystemConfig& config, int k) {
  const MatC f = state.f_rf.expand() * state.f_d[k];
  const MatC w = state.w_rf.expand() * state.w_d[k];
  const MatC a = w.adjoint() * (channel.matrices[k] * f);  // N_s x N_s
  const double xi_inv = 1.0 / state.xi(k);
  const int ns = config.n_streams;
  MatC e = MatC::Identity(ns, ns) - xi_inv * (a + a.adjoint()) +
           (xi_inv * xi_inv) *
               (config.noise_var() * (w.adjoint() * w) + a * a.adjoint());
  return 0.5 * (e + e.adjoint());  // clean Hermitian rounding
}

/// Weighted-MSE objective (1/K) sum_k [ tr(Lambda_k E_k) - ln|Lambda_k| ].
inline double wmmse_objective(const ChannelRealization& channel,
                              const HybridState& state, const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  double j = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    const MatC e = mse_matrix(channel, state, config, k);
    j += (state.weights[k] * e).trace().real() - logdet_hpd(state.weights[k]);
  }
  return j / k_sub;
}

}  // namespace hbf
