#include <catch2/catch_amalgamated.hpp>

#include "hbf/metrics.hpp"
#include "hbf/testing.hpp"

using namespace hbf;

namespace {

/// Rate evaluated through the MSE chain: (1/K) sum log2 |(E_k^mmse)^{-1}|
/// with E_k^mmse = (I + alpha^{-1} G^H W_RF W_RF^H G)^{-1}.
double rate_via_mse_chain(const ChannelRealization& ch, const HybridState& st,
                          const SystemConfig& cfg) {
  const MatC w_rf = st.w_rf.expand();
  const MatC f_rf = st.f_rf.expand();
  double nats = 0.0;
  for (int k = 0; k < cfg.n_subcarriers; ++k) {
    const double xi_inv = 1.0 / st.xi(k);
    const MatC g = xi_inv * (ch.matrices[k] * (f_rf * st.f_d[k]));
    const double alpha = cfg.noise_var() * xi_inv * xi_inv * cfg.n_rx / cfg.n_rx_rf;
    const MatC t = w_rf.adjoint() * g;
    nats += logdet_hpd(MatC::Identity(cfg.n_streams, cfg.n_streams) +
                       (t.adjoint() * t) / alpha);
  }
  return nats / (cfg.n_subcarriers * kLn2);
}

}  // namespace

TEST_CASE("spectral efficiency basics") {
  const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4, -2.0);
  const ChannelRealization ch = generate_channel(cfg, 3);

  SECTION("zero precoder gives zero rate") {
    HybridState st = testing::random_state(ch, cfg, 1);
    for (auto& fd : st.f_d) fd.setZero();
    const RateResult r = spectral_efficiency(ch, st, cfg);
    REQUIRE(r.bits == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("1x1 system is the scalar Shannon formula") {
    SystemConfig one = testing::small_config(1, 1, 1, 1, 1, 1, 0.0);
    ChannelRealization ch1;
    ch1.matrices = {MatC::Ones(1, 1)};
    HybridState st;
    st.f_rf = AnalogBeamformer(Side::Tx, 1, 1);
    st.w_rf = AnalogBeamformer(Side::Rx, 1, 1);
    st.f_d = {MatC::Ones(1, 1)};
    st.w_d = {MatC::Ones(1, 1)};
    st.xi = VecR::Ones(1);
    st.weights = {MatC::Identity(1, 1)};
    REQUIRE(spectral_efficiency(ch1, st, one).bits == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("equals the MSE-chain rate for the Wiener combiner") {
    for (int s = 0; s < 10; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 100 + s);
      REQUIRE(std::abs(spectral_efficiency(ch, st, cfg).bits -
                       rate_via_mse_chain(ch, st, cfg)) < 1e-8);
    }
  }

  SECTION("always non-negative") {
    for (int s = 0; s < 5; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 50 + s, false);
      REQUIRE(spectral_efficiency(ch, st, cfg).bits >= 0.0);
    }
  }
}

TEST_CASE("rate is invariant under joint unitary rotation of the digital parts") {
  const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4, -2.0);
  const ChannelRealization ch = generate_channel(cfg, 9);
  const HybridState st = testing::random_state(ch, cfg, 4);
  Rng rng(11);
  const MatC z = testing::random_complex(cfg.n_streams, cfg.n_streams, rng);
  const MatC u = Eigen::HouseholderQR<MatC>(z).householderQ();
  HybridState rot = st;
  for (int k = 0; k < cfg.n_subcarriers; ++k) {
    rot.f_d[k] = st.f_d[k] * u;
    rot.w_d[k] = st.w_d[k] * u;
  }
  REQUIRE(std::abs(spectral_efficiency(ch, st, cfg).bits -
                   spectral_efficiency(ch, rot, cfg).bits) < 1e-9);
}

TEST_CASE("analog output rate") {
  SECTION("zero digital precoder gives zero") {
    const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4);
    const ChannelRealization ch = generate_channel(cfg, 5);
    HybridState st = testing::random_state(ch, cfg, 2);
    for (auto& fd : st.f_d) fd.setZero();
    REQUIRE(analog_output_rate(ch, st.f_rf, st.f_d, st.w_rf, cfg) ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("matches spectral efficiency when N_r^RF = N_s") {
    const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4, -3.0);
    const ChannelRealization ch = generate_channel(cfg, 6);
    for (int s = 0; s < 10; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 30 + s);
      REQUIRE(std::abs(analog_output_rate(ch, st.f_rf, st.f_d, st.w_rf, cfg) -
                       spectral_efficiency(ch, st, cfg).bits) < 1e-8);
    }
  }
  SECTION("upper-bounds any linear digital combiner when N_r^RF > N_s") {
    const SystemConfig cfg = testing::small_config(16, 8, 4, 4, 2, 4, -3.0);
    const ChannelRealization ch = generate_channel(cfg, 8);
    HybridState st = testing::random_state(ch, cfg, 3, false);
    const double bound = analog_output_rate(ch, st.f_rf, st.f_d, st.w_rf, cfg);
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
      for (auto& wd : st.w_d) wd = testing::random_complex(cfg.n_rx_rf, cfg.n_streams, rng);
      REQUIRE(spectral_efficiency(ch, st, cfg).bits <= bound + 1e-9);
    }
  }
}

TEST_CASE("MSE matrix") {
  const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4, -2.0);
  const ChannelRealization ch = generate_channel(cfg, 12);

  SECTION("zero combiner leaves the identity") {
    HybridState st = testing::random_state(ch, cfg, 7, false);
    for (auto& wd : st.w_d) wd.setZero();
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      const MatC e = mse_matrix(ch, st, cfg, k);
      REQUIRE((e - MatC::Identity(2, 2)).norm() < 1e-12);
    }
  }

  SECTION("scalar expansion |1 - w* h f|^2 + sigma^2 |w|^2") {
    SystemConfig one = testing::small_config(1, 1, 1, 1, 1, 1, -3.0);
    ChannelRealization ch1;
    const cplx h{0.8, -0.4}, f{0.9, 0.1}, w{0.3, 0.7};
    ch1.matrices = {MatC::Constant(1, 1, h)};
    HybridState st;
    st.f_rf = AnalogBeamformer(Side::Tx, 1, 1);
    st.w_rf = AnalogBeamformer(Side::Rx, 1, 1);
    st.f_d = {MatC::Constant(1, 1, f)};
    st.w_d = {MatC::Constant(1, 1, w)};
    st.xi = VecR::Ones(1);
    st.weights = {MatC::Identity(1, 1)};
    const double want =
        std::norm(1.0 - std::conj(w) * h * f) + one.noise_var() * std::norm(w);
    REQUIRE(mse_matrix(ch1, st, one, 0)(0, 0).real() == Catch::Approx(want).margin(1e-12));
  }

  SECTION("Wiener combiner reproduces the closed-form MSE") {
    for (int s = 0; s < 8; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 60 + s);
      const CombinerAux aux = make_combiner_aux(ch, st, cfg);
      const MatC w_rf = st.w_rf.expand();
      for (int k = 0; k < cfg.n_subcarriers; ++k) {
        const MatC closed = hermitian_inverse(
            MatC::Identity(2, 2) +
            (aux.g[k].adjoint() * w_rf * w_rf.adjoint() * aux.g[k]) / aux.alpha(k));
        REQUIRE((mse_matrix(ch, st, cfg, k) - closed).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }

  SECTION("Hermitian positive semi-definite for arbitrary states") {
    for (int s = 0; s < 8; ++s) {
      const HybridState st = testing::random_state(ch, cfg, 80 + s, false);
      for (int k = 0; k < cfg.n_subcarriers; ++k) {
        const MatC e = mse_matrix(ch, st, cfg, k);
        REQUIRE((e - e.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::SelfAdjointEigenSolver<MatC> es(e, Eigen::EigenvaluesOnly);
        REQUIRE(es.eigenvalues().minCoeff() >= -1e-10);
      }
    }
  }
}

TEST_CASE("WMMSE objective") {
  const SystemConfig cfg = testing::small_config(8, 4, 2, 2, 2, 4, -2.0);
  const ChannelRealization ch = generate_channel(cfg, 21);

  SECTION("unit weights with a dead combiner cost N_s") {
    HybridState st = testing::random_state(ch, cfg, 5, false, true);
    for (auto& wd : st.w_d) wd.setZero();
    REQUIRE(wmmse_objective(ch, st, cfg) == Catch::Approx(2.0).margin(1e-12));
  }

  SECTION("weights E^{-1} give N_s + (1/K) sum ln|E_k|") {
    HybridState st = testing::random_state(ch, cfg, 6);
    double logdets = 0.0;
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      const MatC e = mse_matrix(ch, st, cfg, k);
      st.weights[k] = optimal_weight(e);
      logdets += logdet_hpd(e);
    }
    REQUIRE(wmmse_objective(ch, st, cfg) ==
            Catch::Approx(2.0 + logdets / cfg.n_subcarriers).margin(1e-10));
  }

  SECTION("equals N_s - R ln2 at the optimal weights (Wiener combiner)") {
    for (int s = 0; s < 8; ++s) {
      HybridState st = testing::random_state(ch, cfg, 200 + s);
      for (int k = 0; k < cfg.n_subcarriers; ++k)
        st.weights[k] = optimal_weight(mse_matrix(ch, st, cfg, k));
      const double j = wmmse_objective(ch, st, cfg);
      const double r = spectral_efficiency(ch, st, cfg).bits;
      REQUIRE(std::abs(j - (2.0 - r * kLn2)) < 1e-8);
    }
  }

  SECTION("E^{-1} beats random PD weights") {
    HybridState st = testing::random_state(ch, cfg, 7);
    for (int k = 0; k < cfg.n_subcarriers; ++k)
      st.weights[k] = optimal_weight(mse_matrix(ch, st, cfg, k));
    const double best = wmmse_objective(ch, st, cfg);
    Rng rng(17);
    for (int i = 0; i < 50; ++i) {
      HybridState other = st;
      for (auto& w : other.weights) w = testing::random_pd(cfg.n_streams, rng, 0.05);
      REQUIRE(best <= wmmse_objective(ch, other, cfg) + 1e-10);
    }
  }
}
