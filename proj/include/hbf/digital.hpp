#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "hbf/metrics.hpp"

namespace hbf {

/// Per-subcarrier data for the digital precoder update:
/// G~_k = W_k^H H_k, beta_k = sigma^2 N M tr(Lambda_k W_D^H W_D)/(Nt_rf Nr_rf),
/// F~_k = F_RF^H G~_k^H Lambda_k G~_k F_RF + beta_k I.
struct PrecoderAux {
  std::vector<MatC> g_tilde;  // K of N_s x N
  VecR beta;                  // K, positive while W_D != 0
  std::vector<MatC> f_tilde;  // K of Nt_rf x Nt_rf, Hermitian PD
};

/// Data for the digital combiner update: G_k = (1/xi) H_k F_k and
/// alpha_k = sigma^2 M / (xi^2 Nr_rf).
struct CombinerAux {
  std::vector<MatC> g;  // K of M x N_s
  VecR alpha;           // K, positive
};

inline MatC precoder_f_tilde(const MatC& g_tilde, const MatC& weight,
                             const MatC& f_rf, double beta) {
  const MatC t = g_tilde * f_rf;  // N_s x Nt_rf
  MatC ft = t.adjoint() * weight * t +
            beta * MatC::Identity(f_rf.cols(), f_rf.cols());
  return 0.5 * (ft + ft.adjoint());
}

inline PrecoderAux make_precoder_aux(const ChannelRealization& channel,
                                     const HybridState& state,
                                     const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  PrecoderAux aux;
  aux.g_tilde.resize(k_sub);
  aux.beta.resize(k_sub);
  aux.f_tilde.resize(k_sub);
  const MatC w_rf = state.w_rf.expand();
  const MatC f_rf = state.f_rf.expand();
  const double c = config.noise_var() * config.n_tx * config.n_rx /
                   (static_cast<double>(config.n_tx_rf) * config.n_rx_rf);
  for (int k = 0; k < k_sub; ++k) {
    const MatC w = w_rf * state.w_d[k];
    aux.g_tilde[k] = w.adjoint() * channel.matrices[k];
    aux.beta(k) =
        c * (state.weights[k] * state.w_d[k].adjoint() * state.w_d[k]).trace().real();
    aux.f_tilde[k] = precoder_f_tilde(aux.g_tilde[k], state.weights[k], f_rf, aux.beta(k));
  }
  return aux;
}

inline CombinerAux make_combiner_aux(const ChannelRealization& channel,
                                     const HybridState& state,
                                     const SystemConfig& config) {
  const int k_sub = config.n_subcarriers;
  CombinerAux aux;
  aux.g.resize(k_sub);
  aux.alpha.resize(k_sub);
  const MatC f_rf = state.f_rf.expand();
  for (int k = 0; k < k_sub; ++k) {
    const double xi_inv = 1.0 / state.xi(k);
    aux.g[k] = xi_inv * (channel.matrices[k] * (f_rf * state.f_d[k]));
    aux.alpha(k) = config.noise_var() * xi_inv * xi_inv * config.n_rx / config.n_rx_rf;
  }
  return aux;
}

/// Wiener digital combiner
/// W_D = (W_RF^H G G^H W_RF + alpha I)^{-1} W_RF^H G; the alpha I term keeps
/// the system solvable for any G.
inline MatC optimal_digital_combiner(const CombinerAux& aux,
                                     const AnalogBeamformer& w_rf, int k) {
  if (!(aux.alpha(k) > 0.0))
    throw std::runtime_error("optimal_digital_combiner: alpha must be positive");
  const MatC wa = w_rf.expand();
  const MatC t = wa.adjoint() * aux.g[k];  // Nr_rf x N_s
  MatC p = t * t.adjoint() + aux.alpha(k) * MatC::Identity(wa.cols(), wa.cols());
  return Eigen::LLT<MatC>(0.5 * (p + p.adjoint())).solve(t);
}

/// Digital precoder with its scaling factor:
/// F_D = xi F~^{-1} F_RF^H G~^H Lambda, xi chosen so that
/// ||F_D||_F^2 = Nt_rf/N exactly. A zero direction (no signal reaches the
/// combiner) degrades to F_D = 0 with xi = 1.
inline std::pair<MatC, double> optimal_digital_precoder(const PrecoderAux& aux,
                                                        const AnalogBeamformer& f_rf,
                                                        const std::vector<MatC>& weights,
                                                        int k,
                                                        const SystemConfig& config) {
  if (!(aux.beta(k) > 0.0))
    throw std::runtime_error(
        "optimal_digital_precoder: beta <= 0 (degenerate combiner/weight input)");
  const MatC fa = f_rf.expand();
  const MatC ft = precoder_f_tilde(aux.g_tilde[k], weights[k], fa, aux.beta(k));
  const MatC rhs = fa.adjoint() * aux.g_tilde[k].adjoint() * weights[k];
  const MatC dir = Eigen::LLT<MatC>(ft).solve(rhs);  // F_D / xi
  const double budget = static_cast<double>(config.n_tx_rf) / config.n_tx;
  const double nsq = dir.squaredNorm();
  if (!(nsq > 0.0)) return {MatC::Zero(dir.rows(), dir.cols()), 1.0};
  const double xi = std::sqrt(budget / nsq);
  return {xi * dir, xi};
}

/// Optimal WMMSE weight: Lambda = E^{-1} for Hermitian PD E.
inline MatC optimal_weight(const MatC& mse) {
  Eigen::SelfAdjointEigenSolver<MatC> es(mse);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw std::runtime_error("optimal_weight: MSE matrix is near-singular");
  MatC inv = es.eigenvectors() *
             es.eigenvalues().cwiseInverse().asDiagonal() *
             es.eigenvectors().adjoint();
  return 0.5 * (inv + inv.adjoint());
}

/// Accumulated bound matrix
/// A = sum_k phi_k^{-1} G~_k^H ((Nt_rf/N) I + phi_k^{-1} G~_k G~_k^H)^{-1} G~_k
/// with phi_k = sigma^2 N M tr(W_D^H W_D)/(Nt_rf Nr_rf); Hermitian PSD.
inline MatC mmse_bound_matrix(const PrecoderAux& aux, const SystemConfig& config) {
  const int n = config.n_tx;
  const double rho = static_cast<double>(config.n_tx_rf) / n;
  MatC a = MatC::Zero(n, n);
  for (std::size_t k = 0; k < aux.g_tilde.size(); ++k) {
    const double phi = aux.beta(static_cast<Eigen::Index>(k));
    if (!(phi > 0.0)) throw std::runtime_error("mmse_bound_matrix: phi <= 0");
    const MatC& g = aux.g_tilde[k];
    MatC core = rho * MatC::Identity(g.rows(), g.rows()) + (g * g.adjoint()) / phi;
    a.noalias() += g.adjoint() * Eigen::LLT<MatC>(0.5 * (core + core.adjoint())).solve(g) / phi;
  }
  return 0.5 * (a + a.adjoint());
}

}  // namespace hbf
