#pragma once

#include <cstdio>
#include <cstring>
#include <string>

#include "hbf/rng.hpp"
#include "hbf/types.hpp"

namespace hbf {

/// Steering vector of a half-wavelength ULA: entry p is
/// exp(j*p*pi*sin(theta)) / sqrt(N). Always unit norm.
inline VecC ula_response(double angle, const ArrayGeometry& geometry) {
  const int n = geometry.n_elements;
  VecC a(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double step = M_PI * std::sin(angle);
  for (int p = 0; p < n; ++p) a(p) = std::polar(scale, p * step);
  return a;
}

/// Mean angle plus a zero-mean Laplacian offset, wrapped into [0, 2*pi).
inline double sample_laplacian_angle(double mean, double spread, Rng& rng) {
  return wrap_angle(mean + rng.next_laplacian(spread));
}

/// One wideband clustered channel draw together with the parameters that
/// generated it. Regenerating with the same (config, seed) is bit-identical.
struct ChannelRealization {
  std::vector<MatC> matrices;  // K of M x N
  MatC gains;                  // n_clusters x n_rays
  MatR aoa, aod;               // n_clusters x n_rays, radians
  VecR mean_aoa, mean_aod;     // n_clusters
  Eigen::VectorXi delays;      // n_clusters, subcarrier phase taps
  std::uint64_t seed = 0;

  double total_energy() const {
    double e = 0.0;
    for (const auto& h : matrices) e += h.squaredNorm();
    return e;
  }
};

// H_k = sqrt(MN/(Nc*Nr)) sum_c sum_l h_cl a_r(aoa) a_t(aod)^H * phi_{k,c},
// phi_{k,c} = exp(-j*2*pi*(k-1)*t_c/K). Verbatim mode pins every cluster to
// tap t_c = 1 (the printed subcarrier factor); DelayTap mode draws
// t_c = 1 + d_c with d_c uniform on {0, .., max_delay_taps-1}, so
// max_delay_taps = 1 reproduces Verbatim mode bit-exactly.
inline ChannelRealization generate_channel(const SystemConfig& config,
                                           std::uint64_t seed) {
  config.validate();
  const int m = config.n_rx, n = config.n_tx, k_sub = config.n_subcarriers;
  const int nc = config.cluster.n_clusters, nr = config.cluster.n_rays;

  ChannelRealization ch;
  ch.seed = seed;
  ch.gains.resize(nc, nr);
  ch.aoa.resize(nc, nr);
  ch.aod.resize(nc, nr);
  ch.mean_aoa.resize(nc);
  ch.mean_aod.resize(nc);
  ch.delays = Eigen::VectorXi::Ones(nc);

  Rng mean_rng(seed, streams::kMeanAngles);
  Rng gain_rng(seed, streams::kRayGains);
  Rng ray_rng(seed, streams::kRayAngles);
  for (int c = 0; c < nc; ++c) {
    ch.mean_aoa(c) = mean_rng.uniform(0.0, kTwoPi);
    ch.mean_aod(c) = mean_rng.uniform(0.0, kTwoPi);
    for (int l = 0; l < nr; ++l) {
      ch.gains(c, l) = gain_rng.next_cgauss();
      ch.aoa(c, l) =
          sample_laplacian_angle(ch.mean_aoa(c), config.cluster.angle_spread, ray_rng);
      ch.aod(c, l) =
          sample_laplacian_angle(ch.mean_aod(c), config.cluster.angle_spread, ray_rng);
    }
  }
  if (config.cluster.delay_mode == DelayMode::DelayTap) {
    Rng delay_rng(seed, streams::kDelays);
    for (int c = 0; c < nc; ++c)
      ch.delays(c) =
          1 + static_cast<int>(delay_rng.next_u64() %
                               static_cast<std::uint64_t>(config.cluster.max_delay_taps));
  }

  // per-cluster ray sums, shared by all subcarriers
  const double norm = std::sqrt(static_cast<double>(m) * n / (nc * nr));
  const ArrayGeometry rx{m}, tx{n};
  std::vector<MatC> cluster_sum(nc, MatC::Zero(m, n));
  for (int c = 0; c < nc; ++c)
    for (int l = 0; l < nr; ++l)
      cluster_sum[c].noalias() += (norm * ch.gains(c, l)) *
                                  (ula_response(ch.aoa(c, l), rx) *
                                   ula_response(ch.aod(c, l), tx).adjoint());

  ch.matrices.assign(k_sub, MatC::Zero(m, n));
  for (int k = 0; k < k_sub; ++k)
    for (int c = 0; c < nc; ++c)
      ch.matrices[k].noalias() +=
          std::polar(1.0, -kTwoPi * k * ch.delays(c) / k_sub) * cluster_sum[c];
  return ch;
}

// --- binary channel dump -------------------------------------------------
//
// 32-byte header: magic "HBFC", version u32, M u32, N u32, K u32, seed u64,
// 4 reserved bytes; then K blocks of M x N entries, row-major, each entry an
// interleaved (re, im) pair of little-endian 64-bit floats.

inline constexpr std::uint32_t kChannelDumpVersion = 1;

inline void dump_channel(const ChannelRealization& ch, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  const std::uint32_t m = static_cast<std::uint32_t>(ch.matrices.front().rows());
  const std::uint32_t n = static_cast<std::uint32_t>(ch.matrices.front().cols());
  const std::uint32_t k = static_cast<std::uint32_t>(ch.matrices.size());
  unsigned char header[32] = {0};
  std::memcpy(header, "HBFC", 4);
  const std::uint32_t ver = kChannelDumpVersion;
  std::memcpy(header + 4, &ver, 4);
  std::memcpy(header + 8, &m, 4);
  std::memcpy(header + 12, &n, 4);
  std::memcpy(header + 16, &k, 4);
  std::memcpy(header + 20, &ch.seed, 8);
  bool ok = std::fwrite(header, 1, 32, f) == 32;
  for (const auto& h : ch.matrices) {
    for (Eigen::Index r = 0; ok && r < h.rows(); ++r)
      for (Eigen::Index c = 0; ok && c < h.cols(); ++c) {
        const double buf[2] = {h(r, c).real(), h(r, c).imag()};
        ok = std::fwrite(buf, sizeof(double), 2, f) == 2;
      }
  }
  ok = (std::fclose(f) == 0) && ok;
  if (!ok) throw std::runtime_error("short write while dumping channel: " + path);
}

inline ChannelRealization load_channel_dump(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  unsigned char header[32];
  if (std::fread(header, 1, 32, f) != 32 || std::memcmp(header, "HBFC", 4) != 0) {
    std::fclose(f);
    throw std::runtime_error("not a channel dump: " + path);
  }
  std::uint32_t ver, m, n, k;
  std::memcpy(&ver, header + 4, 4);
  std::memcpy(&m, header + 8, 4);
  std::memcpy(&n, header + 12, 4);
  std::memcpy(&k, header + 16, 4);
  ChannelRealization ch;
  std::memcpy(&ch.seed, header + 20, 8);
  if (ver != kChannelDumpVersion) {
    std::fclose(f);
    throw std::runtime_error("unsupported channel dump version");
  }
  ch.matrices.assign(k, MatC::Zero(m, n));
  bool ok = true;
  for (auto& h : ch.matrices)
    for (std::uint32_t r = 0; ok && r < m; ++r)
      for (std::uint32_t c = 0; ok && c < n; ++c) {
        double buf[2];
        ok = std::fread(buf, sizeof(double), 2, f) == 2;
        h(r, c) = {buf[0], buf[1]};
      }
  std::fclose(f);
  if (!ok) throw std::runtime_error("truncated channel dump: " + path);
  return ch;
}

}  // namespace hbf
