#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace hbf {

using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;
using cplx = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * M_PI;

/// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  return t;
}

struct ArrayGeometry {
  int n_elements = 1;  // half-wavelength spacing is implied throughout
};

enum class DelayMode { Verbatim, DelayTap };

struct ClusterParams {
  int n_clusters = 5;
  int n_rays = 10;
  double angle_spread = 10.0 * M_PI / 180.0;  // Laplacian scale, radians
  DelayMode delay_mode = DelayMode::Verbatim;
  int max_delay_taps = 1;  // DelayTap mode only
};

/// Knobs for the iterative solvers. All caps/tolerances strictly positive.
struct SolverControls {
  int outer_cap = 30;
  double outer_rel_tol = 1e-4;  // on the reported rate
  int ei_sweep_cap = 5;
  double ei_rel_tol = 1e-4;
  int mo_iter_cap = 50;
  double mo_grad_tol = 1e-6;
  double line_search_tol = 1e-3;  // radians, 1-D phase search
};

struct SystemConfig {
  int n_tx = 64;       // N
  int n_rx = 32;       // M
  int n_tx_rf = 4;     // N_t^RF
  int n_rx_rf = 2;     // N_r^RF
  int n_streams = 2;   // N_s
  int n_subcarriers = 64;  // K
  double snr_db = 0.0;
  ClusterParams cluster;
  std::optional<int> quant_bits;  // B, phase-shifter resolution
  SolverControls controls;
  std::uint64_t seed = 1;

  double noise_var() const { return std::pow(10.0, -snr_db / 10.0); }
  int tx_block() const { return n_tx / n_tx_rf; }
  int rx_block() const { return n_rx / n_rx_rf; }

  void validate() const {
    if (n_tx < 1 || n_rx < 1 || n_tx_rf < 1 || n_rx_rf < 1 || n_streams < 1 ||
        n_subcarriers < 1)
      throw std::invalid_argument("config: all dimensions must be positive");
    if (n_tx % n_tx_rf != 0 || n_rx % n_rx_rf != 0)
      throw std::invalid_argument(
          "config: antenna counts must be divisible by the RF chain counts");
    if (!(n_streams <= n_rx_rf && n_rx_rf <= n_rx))
      throw std::invalid_argument("config: require N_s <= N_r^RF <= M");
    if (!(n_streams <= n_tx_rf && n_tx_rf <= n_tx))
      throw std::invalid_argument("config: require N_s <= N_t^RF <= N");
    if (cluster.n_clusters < 1 || cluster.n_rays < 1)
      throw std::invalid_argument("config: cluster counts must be positive");
    if (cluster.angle_spread <= 0.0)
      throw std::invalid_argument("config: angle spread must be positive");
    if (cluster.delay_mode == DelayMode::DelayTap &&
        (cluster.max_delay_taps < 1 || cluster.max_delay_taps > n_subcarriers))
      throw std::invalid_argument(
          "config: max_delay_taps must lie in [1, K] (cyclic-prefix bound)");
    if (quant_bits && *quant_bits < 1)
      throw std::invalid_argument("config: quant_bits must be >= 1");
    if (controls.outer_cap < 1 || controls.ei_sweep_cap < 1 || controls.mo_iter_cap < 1 ||
        controls.outer_rel_tol <= 0.0 || controls.ei_rel_tol <= 0.0 ||
        controls.mo_grad_tol <= 0.0 || controls.line_search_tol <= 0.0)
      throw std::invalid_argument("config: solver controls must be positive");
  }
};

enum class Side { Tx, Rx };

/// Block-diagonal unit-modulus beamformer stored as per-chain phase vectors.
/// Column q of the expanded matrix is supported on rows
/// [q*block, (q+1)*block); every supported entry has modulus exactly 1 and
/// every off-block entry is exactly zero.
struct AnalogBeamformer {
  Side side = Side::Tx;
  int n_ant = 0;
  int n_rf = 0;
  MatR phases;  // block x n_rf, radians

  AnalogBeamformer() = default;
  AnalogBeamformer(Side s, int ant, int rf)
      : side(s), n_ant(ant), n_rf(rf), phases(MatR::Zero(ant / rf, rf)) {
    if (rf < 1 || ant < rf || ant % rf != 0)
      throw std::invalid_argument("analog beamformer: invalid block structure");
  }

  int block() const { return n_ant / n_rf; }

  MatC expand() const {
    MatC m = MatC::Zero(n_ant, n_rf);
    const int b = block();
    for (int q = 0; q < n_rf; ++q)
      for (int p = 0; p < b; ++p)
        m(q * b + p, q) = std::polar(1.0, phases(p, q));
    return m;
  }

  /// One complex entry per antenna (the nonzero of that antenna's row).
  VecC support_vector() const {
    VecC v(n_ant);
    const int b = block();
    for (int q = 0; q < n_rf; ++q)
      for (int p = 0; p < b; ++p) v(q * b + p) = std::polar(1.0, phases(p, q));
    return v;
  }

  void set_from_support(const VecC& v) {
    const int b = block();
    for (int q = 0; q < n_rf; ++q)
      for (int p = 0; p < b; ++p)
        phases(p, q) = wrap_angle(std::arg(v(q * b + p)));
  }

  void wrap() {
    for (int q = 0; q < n_rf; ++q)
      for (int p = 0; p < phases.rows(); ++p)
        phases(p, q) = wrap_angle(phases(p, q));
  }
};

/// Snaps every phase onto the 2^bits-point uniform grid {2*pi*n/2^bits}.
inline AnalogBeamformer quantize_phases(const AnalogBeamformer& x, int bits) {
  if (bits < 1) throw std::invalid_argument("quantize_phases: need bits >= 1");
  const int m = 1 << bits;
  AnalogBeamformer out = x;
  for (int q = 0; q < out.n_rf; ++q)
    for (int p = 0; p < out.phases.rows(); ++p) {
      const long n = std::lround(wrap_angle(out.phases(p, q)) * m / kTwoPi) % m;
      out.phases(p, q) = kTwoPi * static_cast<double>(n) / m;
    }
  return out;
}

/// Full hybrid beamforming state: shared analog matrices, per-subcarrier
/// digital matrices, scaling factors xi_k and weight matrices.
struct HybridState {
  AnalogBeamformer f_rf;  // Tx side
  AnalogBeamformer w_rf;  // Rx side
  std::vector<MatC> f_d;  // K of N_t^RF x N_s
  std::vector<MatC> w_d;  // K of N_r^RF x N_s
  VecR xi;                // K, positive
  std::vector<MatC> weights;  // K of N_s x N_s, Hermitian PD
};

}  // namespace hbf
