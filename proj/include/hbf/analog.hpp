#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "hbf/digital.hpp"

namespace hbf {

enum class SubproblemSide { Precoder, Combiner };

/// Side-tagged reduced problem for the analog beamformer:
/// minimize (1/K) sum_k tr((C_k + s_k^{-1} L_k X X^H R_k)^{-1}) over
/// block-diagonal unit-modulus X (dim x n_rf). The per-k matrix inside the
/// inverse is similar to a Hermitian PD matrix on both sides, so the trace
/// is real and positive.
///
///   Precoder: C = Lambda^{-1}, L = G~, R = G~^H, s = beta, ratio = Nt_rf/N
///   Combiner: C = Lambda^{-1}, L = Lambda^{-1} G^H, R = G, s = alpha,
///             ratio = Nr_rf/M
struct AnalogSubproblem {
  SubproblemSide side = SubproblemSide::Precoder;
  int dim = 0;    // ambient antenna count D
  int n_rf = 0;   // chain count
  double ratio = 0.0;  // n_rf / D
  std::vector<MatC> c_mat;  // K of N_s x N_s
  std::vector<MatC> left;   // K of N_s x D
  std::vector<MatC> right;  // K of D x N_s
  VecR scale;               // K, positive

  int n_subcarriers() const { return static_cast<int>(c_mat.size()); }
  int block() const { return dim / n_rf; }
  bool on_support(int row, int col) const { return row / block() == col; }

  /// Block-support indicator (P1 / P2 of the masked gradient).
  MatR mask() const {
    MatR m = MatR::Zero(dim, n_rf);
    for (int r = 0; r < dim; ++r) m(r, r / block()) = 1.0;
    return m;
  }
};

inline MatC hermitian_inverse(const MatC& a) {
  return Eigen::LLT<MatC>(0.5 * (a + a.adjoint()))
      .solve(MatC::Identity(a.rows(), a.cols()));
}

inline AnalogSubproblem build_subproblem(SubproblemSide side,
                                         const ChannelRealization& channel,
                                         const HybridState& state,
                                         const SystemConfig& config) {
  AnalogSubproblem sub;
  sub.side = side;
  const int k_sub = config.n_subcarriers;
  sub.c_mat.resize(k_sub);
  sub.left.resize(k_sub);
  sub.right.resize(k_sub);
  sub.scale.resize(k_sub);
  if (side == SubproblemSide::Precoder) {
    sub.dim = config.n_tx;
    sub.n_rf = config.n_tx_rf;
    const PrecoderAux aux = make_precoder_aux(channel, state, config);
    for (int k = 0; k < k_sub; ++k) {
      sub.c_mat[k] = hermitian_inverse(state.weights[k]);
      sub.left[k] = aux.g_tilde[k];
      sub.right[k] = aux.g_tilde[k].adjoint();
      sub.scale(k) = aux.beta(k);
    }
  } else {
    sub.dim = config.n_rx;
    sub.n_rf = config.n_rx_rf;
    const CombinerAux aux = make_combiner_aux(channel, state, config);
    for (int k = 0; k < k_sub; ++k) {
      sub.c_mat[k] = hermitian_inverse(state.weights[k]);
      sub.left[k] = sub.c_mat[k] * aux.g[k].adjoint();
      sub.right[k] = aux.g[k];
      sub.scale(k) = aux.alpha(k);
    }
  }
  sub.ratio = static_cast<double>(sub.n_rf) / sub.dim;
  for (int k = 0; k < k_sub; ++k)
    if (!(sub.scale(k) > 0.0))
      throw std::runtime_error("build_subproblem: nonpositive scale s_k");
  return sub;
}

/// Objective on an arbitrary (not necessarily unit-modulus) ambient matrix;
/// used by the finite-difference oracle and the solvers' internals.
inline double objective_matrix(const AnalogSubproblem& sub, const MatC& x) {
  const int k_sub = sub.n_subcarriers();
  double acc = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    const MatC u = sub.left[k] * x;            // N_s x n_rf
    const MatC v = x.adjoint() * sub.right[k]; // n_rf x N_s
    const MatC m = sub.c_mat[k] + (u * v) / sub.scale(k);
    acc += Eigen::PartialPivLU<MatC>(m)
               .solve(MatC::Identity(m.rows(), m.cols()))
               .trace()
               .real();
  }
  return acc / k_sub;
}

inline double objective(const AnalogSubproblem& sub, const AnalogBeamformer& x) {
  return objective_matrix(sub, x.expand());
}

/// Periodic 1-D slice of the objective at one phase-shifter element:
/// value(theta) = -(1/K) sum_k (a + b cos(theta+th1)) / (c + d cos(theta+th2)).
/// The full objective at that element equals offset + value(theta).
struct ScalarRatioFunction {
  VecR a, b, c, d, th1, th2;
  double offset = 0.0;

  double value(double theta) const {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k)
      acc += (a(k) + b(k) * std::cos(theta + th1(k))) /
             (c(k) + d(k) * std::cos(theta + th2(k)));
    return -acc / static_cast<double>(a.size());
  }
};

/// Coarse 16-point grid, bracket the best point, then golden-section down to
/// width `tol`. Returns a minimizer no worse than the best grid point; a
/// single golden pass is unsafe here because the ratio sum is multi-modal
/// for K > 1.
inline double periodic_minimize(const ScalarRatioFunction& f, double tol) {
  constexpr int kGrid = 16;
  const double h = kTwoPi / kGrid;
  double best_theta = 0.0, best_val = f.value(0.0);
  for (int i = 1; i < kGrid; ++i) {
    const double v = f.value(i * h);
    if (v < best_val) {
      best_val = v;
      best_theta = i * h;
    }
  }
  double lo = best_theta - h, hi = best_theta + h;
  const double invphi = 0.6180339887498949;
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = f.value(c), fd = f.value(d);
  while (hi - lo > tol) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = f.value(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = f.value(d);
    }
    if (fc < best_val) {
      best_val = fc;
      best_theta = c;
    }
    if (fd < best_val) {
      best_val = fd;
      best_theta = d;
    }
  }
  return wrap_angle(best_theta);
}

namespace detail {

/// Everything that is fixed while sweeping the elements of one chain:
/// Omega_{q,k} excludes column q and is untouched by within-column updates.
struct ChainData {
  double offset = 0.0;             // (1/K) sum_k tr(Omega^{-1})
  std::vector<MatC> a_blk, b_blk;  // K of block x block, Hermitian
};

inline void check_hermitian(const MatC& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::runtime_error(std::string("ei_coefficients: non-Hermitian ") + what +
                             " (inconsistent subproblem data)");
}

/// u[k] = L_k X and v[k] = X^H R_k for the current support values.
inline void lift_columns(const AnalogSubproblem& sub, const VecC& support,
                         std::vector<MatC>& u, std::vector<MatC>& v) {
  const int k_sub = sub.n_subcarriers();
  const int blk = sub.block();
  u.assign(k_sub, MatC());
  v.assign(k_sub, MatC());
  for (int k = 0; k < k_sub; ++k) {
    const Eigen::Index ns = sub.c_mat[k].rows();
    u[k].resize(ns, sub.n_rf);
    v[k].resize(sub.n_rf, ns);
    for (int q = 0; q < sub.n_rf; ++q) {
      const VecC xq = support.segment(q * blk, blk);
      u[k].col(q) = sub.left[k].middleCols(q * blk, blk) * xq;
      v[k].row(q) = xq.adjoint() * sub.right[k].middleRows(q * blk, blk);
    }
  }
}

inline ChainData chain_data(const AnalogSubproblem& sub, int q,
                            const std::vector<MatC>& u, const std::vector<MatC>& v) {
  const int k_sub = sub.n_subcarriers();
  const int blk = sub.block();
  ChainData cd;
  cd.a_blk.resize(k_sub);
  cd.b_blk.resize(k_sub);
  for (int k = 0; k < k_sub; ++k) {
    const double s_inv = 1.0 / sub.scale(k);
    MatC omega = sub.c_mat[k] + s_inv * (u[k] * v[k] - u[k].col(q) * v[k].row(q));
    const Eigen::Index ns = omega.rows();
    const MatC omega_inv =
        Eigen::PartialPivLU<MatC>(omega).solve(MatC::Identity(ns, ns));
    cd.offset += omega_inv.trace().real();
    const MatC l_blk = sub.left[k].middleCols(q * blk, blk);    // N_s x blk
    const MatC r_blk = sub.right[k].middleRows(q * blk, blk);   // blk x N_s
    MatC a = s_inv * (r_blk * omega_inv) * (omega_inv * l_blk);
    MatC b = sub.ratio * MatC::Identity(blk, blk) + s_inv * (r_blk * (omega_inv * l_blk));
    check_hermitian(a, "A_{q,k}");
    check_hermitian(b, "B_{q,k}");
    cd.a_blk[k] = 0.5 * (a + a.adjoint());
    cd.b_blk[k] = 0.5 * (b + b.adjoint());
  }
  cd.offset /= k_sub;
  return cd;
}

inline ScalarRatioFunction scalar_slice(const ChainData& cd, const VecC& x_blk, int p) {
  const int k_sub = static_cast<int>(cd.a_blk.size());
  ScalarRatioFunction f;
  f.a.resize(k_sub);
  f.b.resize(k_sub);
  f.c.resize(k_sub);
  f.d.resize(k_sub);
  f.th1.resize(k_sub);
  f.th2.resize(k_sub);
  f.offset = cd.offset;
  VecC hat = x_blk;
  hat(p) = 0.0;
  for (int k = 0; k < k_sub; ++k) {
    const MatC& a = cd.a_blk[k];
    const MatC& b = cd.b_blk[k];
    const cplx ca = hat.adjoint() * a.col(p);
    const cplx cb = hat.adjoint() * b.col(p);
    f.a(k) = (hat.adjoint() * a * hat).value().real() + a(p, p).real();
    f.b(k) = 2.0 * std::abs(ca);
    f.th1(k) = std::arg(ca);
    f.c(k) = (hat.adjoint() * b * hat).value().real() + b(p, p).real();
    f.d(k) = 2.0 * std::abs(cb);
    f.th2(k) = std::arg(cb);
  }
  return f;
}

/// Total variation of the slice over the coarse grid; flat slices (lone
/// element in a degenerate block) are left unchanged by the sweeps.
inline bool slice_is_flat(const ScalarRatioFunction& f) {
  double lo = f.value(0.0), hi = lo;
  for (int i = 1; i < 16; ++i) {
    const double v = f.value(i * kTwoPi / 16);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo < 1e-14;
}

}  // namespace detail

/// 1-D slice of the objective for element p (index within the block) of
/// chain q. Recomputes the chain data from scratch; the sweep algorithms use
/// the shared per-chain path instead.
inline ScalarRatioFunction ei_coefficients(const AnalogSubproblem& sub,
                                           const AnalogBeamformer& x, int q, int p) {
  if (q < 0 || q >= sub.n_rf || p < 0 || p >= sub.block())
    throw std::invalid_argument("ei_coefficients: (p, q) must index a block-support entry");
  std::vector<MatC> u, v;
  detail::lift_columns(sub, x.support_vector(), u, v);
  const detail::ChainData cd = detail::chain_data(sub, q, u, v);
  return detail::scalar_slice(cd, x.support_vector().segment(q * sub.block(), sub.block()), p);
}

namespace detail {

template <typename PickPhase>
AnalogBeamformer ei_sweep(const AnalogSubproblem& sub, const AnalogBeamformer& x,
                          PickPhase&& pick) {
  AnalogBeamformer out = x;
  const int blk = sub.block();
  VecC support = out.support_vector();
  std::vector<MatC> u, v;
  lift_columns(sub, support, u, v);
  for (int q = 0; q < sub.n_rf; ++q) {
    const ChainData cd = chain_data(sub, q, u, v);
    VecC x_blk = support.segment(q * blk, blk);
    for (int p = 0; p < blk; ++p) {
      const ScalarRatioFunction f = scalar_slice(cd, x_blk, p);
      const double picked = pick(f, out.phases(p, q));
      out.phases(p, q) = picked;
      x_blk(p) = std::polar(1.0, picked);
    }
    support.segment(q * blk, blk) = x_blk;
    for (int k = 0; k < sub.n_subcarriers(); ++k) {
      u[k].col(q) = sub.left[k].middleCols(q * blk, blk) * x_blk;
      v[k].row(q) = x_blk.adjoint() * sub.right[k].middleRows(q * blk, blk);
    }
  }
  return out;
}

}  // namespace detail

/// One full element-iteration sweep (chains ascending, elements ascending
/// within each block). An element moves only if the 1-D search found a value
/// no worse than the incumbent, so the objective never increases.
inline AnalogBeamformer ei_pass(const AnalogSubproblem& sub, const AnalogBeamformer& x,
                                double line_search_tol = 1e-3) {
  return detail::ei_sweep(sub, x, [&](const ScalarRatioFunction& f, double cur) {
    if (detail::slice_is_flat(f)) return cur;  // lone element of a degenerate block
    const double cand = periodic_minimize(f, line_search_tol);
    return f.value(cand) <= f.value(cur) ? cand : cur;
  });
}

/// Quantized sweep: every element is set to the best of the 2^bits uniform
/// phases, ties to the lowest index. Output phases lie exactly on the grid.
inline AnalogBeamformer ei_pass_quantized(const AnalogSubproblem& sub,
                                          const AnalogBeamformer& x, int bits) {
  if (bits < 1) throw std::invalid_argument("ei_pass_quantized: need bits >= 1");
  const int m = 1 << bits;
  return detail::ei_sweep(sub, x, [&](const ScalarRatioFunction& f, double) {
    int best = 0;
    double best_val = f.value(0.0);
    for (int i = 1; i < m; ++i) {
      const double v = f.value(kTwoPi * i / m);
      if (v < best_val) {
        best_val = v;
        best = i;
      }
    }
    return kTwoPi * best / m;
  });
}

/// Masked Euclidean gradient (Wirtinger derivative w.r.t. conj(X)):
/// -((1/K) sum_k s_k^{-1} R_k M_k^{-2} L_k X) on the block support, exact
/// zeros elsewhere, with M_k = C_k + s_k^{-1} L_k X X^H R_k.
inline MatC euclidean_gradient(const AnalogSubproblem& sub, const AnalogBeamformer& x) {
  const int k_sub = sub.n_subcarriers();
  const int blk = sub.block();
  const VecC support = x.support_vector();
  std::vector<MatC> u, v;
  detail::lift_columns(sub, support, u, v);
  MatC dense = MatC::Zero(sub.dim, sub.n_rf);
  for (int k = 0; k < k_sub; ++k) {
    const double s_inv = 1.0 / sub.scale(k);
    const MatC m = sub.c_mat[k] + s_inv * (u[k] * v[k]);
    Eigen::PartialPivLU<MatC> lu(m);
    const MatC p = lu.solve(lu.solve(u[k]));  // M^{-2} L X, N_s x n_rf
    dense.noalias() -= (s_inv / k_sub) * (sub.right[k] * p);
  }
  MatC masked = MatC::Zero(sub.dim, sub.n_rf);
  for (int q = 0; q < sub.n_rf; ++q)
    masked.block(q * blk, q, blk, 1) = dense.block(q * blk, q, blk, 1);
  return masked;
}

struct MoOptions {
  int max_iters = 50;
  double grad_tol = 1e-6;
};

struct MoResult {
  AnalogBeamformer x;
  int iterations = 0;
};

/// Riemannian conjugate gradient on the product of unit circles over the
/// block support: tangent projection of the Euclidean gradient,
/// Polak-Ribiere directions with restart when descent is lost, Armijo
/// backtracking (c1 = 1e-4, factor 0.5, initial step 1/||grad||) and
/// entrywise retraction. The objective never increases.
inline MoResult mo_solve(const AnalogSubproblem& sub, const AnalogBeamformer& x0,
                         const MoOptions& opts = {}) {
  const int k_sub = sub.n_subcarriers();
  const int blk = sub.block();

  const auto objective_support = [&](const VecC& s) {
    double acc = 0.0;
    for (int k = 0; k < k_sub; ++k) {
      const Eigen::Index ns = sub.c_mat[k].rows();
      MatC u(ns, sub.n_rf), v(sub.n_rf, ns);
      for (int q = 0; q < sub.n_rf; ++q) {
        const VecC xq = s.segment(q * blk, blk);
        u.col(q) = sub.left[k].middleCols(q * blk, blk) * xq;
        v.row(q) = xq.adjoint() * sub.right[k].middleRows(q * blk, blk);
      }
      const MatC m = sub.c_mat[k] + (u * v) / sub.scale(k);
      acc += Eigen::PartialPivLU<MatC>(m).solve(MatC::Identity(ns, ns)).trace().real();
    }
    return acc / k_sub;
  };

  const auto gradient_support = [&](const VecC& s) {
    VecC g = VecC::Zero(sub.dim);
    for (int k = 0; k < k_sub; ++k) {
      const Eigen::Index ns = sub.c_mat[k].rows();
      MatC u(ns, sub.n_rf), v(sub.n_rf, ns);
      for (int q = 0; q < sub.n_rf; ++q) {
        const VecC xq = s.segment(q * blk, blk);
        u.col(q) = sub.left[k].middleCols(q * blk, blk) * xq;
        v.row(q) = xq.adjoint() * sub.right[k].middleRows(q * blk, blk);
      }
      const double s_inv = 1.0 / sub.scale(k);
      const MatC m = sub.c_mat[k] + s_inv * (u * v);
      Eigen::PartialPivLU<MatC> lu(m);
      const MatC p = lu.solve(lu.solve(u));  // M^{-2} L X
      for (int q = 0; q < sub.n_rf; ++q)
        g.segment(q * blk, blk).noalias() -=
            (s_inv / k_sub) * (sub.right[k].middleRows(q * blk, blk) * p.col(q));
    }
    return g;
  };

  const auto project = [](const VecC& point, const VecC& dir) {
    VecC t(dir.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i)
      t(i) = dir(i) - (std::conj(point(i)) * dir(i)).real() * point(i);
    return t;
  };
  const auto retract = [](const VecC& w, const VecC& fallback) {
    VecC r(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double mag = std::abs(w(i));
      r(i) = mag > 1e-300 ? w(i) / mag : fallback(i);
    }
    return r;
  };
  const auto inner = [](const VecC& a, const VecC& b) { return a.dot(b).real(); };

  VecC point = x0.support_vector();
  double f_cur = objective_support(point);
  VecC rgrad = project(point, gradient_support(point));
  VecC dir = -rgrad;
  int iters = 0;
  while (iters < opts.max_iters) {
    const double gnorm = std::sqrt(inner(rgrad, rgrad));
    if (gnorm < opts.grad_tol) break;
    if (inner(dir, -rgrad) <= 0.0) dir = -rgrad;  // restart to steepest descent

    VecC next;
    double f_next = f_cur;
    const auto backtrack = [&](const VecC& d) {
      const double slope = inner(rgrad, d);  // < 0 for descent directions
      double step = 1.0 / gnorm;
      for (int bt = 0; bt < 60; ++bt) {
        next = retract(point + step * d, point);
        f_next = objective_support(next);
        if (f_next <= f_cur + 1e-4 * step * slope) return true;
        step *= 0.5;
      }
      return false;
    };
    bool accepted = backtrack(dir);
    if (!accepted && inner(dir + rgrad, dir + rgrad) > 0.0) {
      dir = -rgrad;  // conjugate direction stalled, retry along steepest descent
      accepted = backtrack(dir);
    }
    if (!accepted || f_next > f_cur) break;  // numerically at a floor
    const VecC rgrad_next = project(next, gradient_support(next));
    const double denom = inner(rgrad, rgrad);
    const double beta =
        denom > 0.0 ? inner(rgrad_next, rgrad_next - project(next, rgrad)) / denom : 0.0;
    dir = -rgrad_next + beta * project(next, dir);
    point = next;
    f_cur = f_next;
    rgrad = rgrad_next;
    ++iters;
  }
  MoResult res;
  res.x = x0;
  if (iters > 0) res.x.set_from_support(point);
  res.iterations = iters;
  return res;
}

/// Repeated sweeps / solver passes until the relative objective change drops
/// below rel_tol or the cap is hit. Used for both EI flavours.
template <typename Pass>
inline AnalogBeamformer iterate_to_tolerance(const AnalogSubproblem& sub,
                                             const AnalogBeamformer& x0, int cap,
                                             double rel_tol, Pass&& pass) {
  AnalogBeamformer x = x0;
  double prev = objective(sub, x);
  for (int i = 0; i < cap; ++i) {
    x = pass(x);
    const double cur = objective(sub, x);
    if (std::abs(prev - cur) <= rel_tol * std::max(1.0, std::abs(prev))) break;
    prev = cur;
  }
  return x;
}

}  // namespace hbf
