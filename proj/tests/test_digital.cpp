#include <catch2/catch_amalgamated.hpp>

#include "hbf/digital.hpp"
#include "hbf/testing.hpp"

using namespace hbf;

namespace {

/// tr(Lambda E_k) as an explicit function of W_D (everything else fixed);
/// independent evaluation path for the combiner optimality oracles.
double weighted_mse_of_combiner(const ChannelRealization& ch, HybridState st,
                                const SystemConfig& cfg, int k, const MatC& w_d) {
  st.w_d[k] = w_d;
  return (st.weights[k] * mse_matrix(ch, st, cfg, k)).trace().real();
}

/// Full WMMSE objective as a function of one subcarrier's (F_D, xi).
double weighted_mse_of_precoder(const ChannelRealization& ch, HybridState st,
                                const SystemConfig& cfg, int k, const MatC& f_d,
                                double xi) {
  st.f_d[k] = f_d;
  st.xi(k) = xi;
  return (st.weights[k] * mse_matrix(ch, st, cfg, k)).trace().real();
}

}  // namespace

TEST_CASE("optimal digital combiner") {
  const SystemConfig cfg = testing::small_config(8, 8, 2, 2, 2, 4, -2.0);
  const ChannelRealization ch = generate_channel(cfg, 2);

  SECTION("scalar case is the Wiener solution g/(|g|^2 + alpha)") {
    CombinerAux aux;
    const cplx g{0.6, -0.3};
    aux.g = {MatC::Constant(1, 1, g)};
    aux.alpha = VecR::Constant(1, 0.7);
    AnalogBeamformer w(Side::Rx, 1, 1);
    const MatC wd = optimal_digital_combiner(aux, w, 0);
    REQUIRE(std::abs(wd(0, 0) - g / (std::norm(g) + 0.7)) < 1e-12);
  }

  SECTION("no feasible perturbation improves tr(Lambda E)") {
    const HybridState st = testing::random_state(ch, cfg, 10, false);
    const CombinerAux aux = make_combiner_aux(ch, st, cfg);
    Rng rng(3);
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      const MatC wd = optimal_digital_combiner(aux, st.w_rf, k);
      const double base = weighted_mse_of_combiner(ch, st, cfg, k, wd);
      for (int i = 0; i < 100; ++i) {
        MatC delta = testing::random_complex(cfg.n_rx_rf, cfg.n_streams, rng);
        delta *= 1e-3 / delta.norm();
        REQUIRE(base <= weighted_mse_of_combiner(ch, st, cfg, k, wd + delta) + 1e-12);
      }
    }
  }

  SECTION("agrees with a projected-gradient minimizer of tr(E)") {
    // independent oracle: plain gradient descent on the convex quadratic
    const SystemConfig c41 = testing::small_config(8, 4, 2, 1, 1, 1, 0.0);
    const ChannelRealization ch41 = generate_channel(c41, 4);
    HybridState st = testing::random_state(ch41, c41, 11, false, true);
    const CombinerAux aux = make_combiner_aux(ch41, st, c41);
    const MatC closed = optimal_digital_combiner(aux, st.w_rf, 0);

    const MatC w_rf = st.w_rf.expand();
    const MatC t = w_rf.adjoint() * aux.g[0];
    const MatC p = t * t.adjoint() + aux.alpha(0) * MatC::Identity(1, 1);
    MatC w = MatC::Zero(1, 1);
    for (int it = 0; it < 20000; ++it) w -= 0.2 * (p * w - t) / p(0, 0).real();
    REQUIRE((w - closed).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("optimal digital precoder") {
  const SystemConfig cfg = testing::small_config(16, 8, 4, 2, 2, 4, -4.0);
  const ChannelRealization ch = generate_channel(cfg, 5);
  const HybridState st = testing::random_state(ch, cfg, 20);
  const PrecoderAux aux = make_precoder_aux(ch, st, cfg);
  const double budget = static_cast<double>(cfg.n_tx_rf) / cfg.n_tx;

  SECTION("scaling makes the power constraint active") {
    const MatC f_rf = st.f_rf.expand();
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      const auto [fd, xi] = optimal_digital_precoder(aux, st.f_rf, st.weights, k, cfg);
      REQUIRE(std::abs(fd.squaredNorm() - budget) < 1e-10);
      REQUIRE(std::abs((f_rf * fd).squaredNorm() - 1.0) < 1e-10);
      REQUIRE(xi > 0.0);
    }
  }

  SECTION("update never loses to the incumbent or to random feasible pairs") {
    Rng rng(6);
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
      const auto [fd, xi] = optimal_digital_precoder(aux, st.f_rf, st.weights, k, cfg);
      const double updated = weighted_mse_of_precoder(ch, st, cfg, k, fd, xi);
      REQUIRE(updated <=
              weighted_mse_of_precoder(ch, st, cfg, k, st.f_d[k], st.xi(k)) + 1e-10);
      for (int i = 0; i < 100; ++i) {
        MatC cand = testing::random_complex(cfg.n_tx_rf, cfg.n_streams, rng);
        const double cand_xi = std::sqrt(budget / cand.squaredNorm());
        cand *= cand_xi;
        REQUIRE(updated <= weighted_mse_of_precoder(ch, st, cfg, k, cand, cand_xi) + 1e-10);
      }
    }
  }

  SECTION("beta <= 0 is rejected") {
    PrecoderAux broken = aux;
    broken.beta(0) = 0.0;
    REQUIRE_THROWS_AS(optimal_digital_precoder(broken, st.f_rf, st.weights, 0, cfg),
                      std::runtime_error);
  }
}

TEST_CASE("optimal weight is the MSE inverse") {
  REQUIRE((optimal_weight(MatC::Identity(2, 2)) - MatC::Identity(2, 2)).norm() < 1e-14);

  MatC e = MatC::Zero(2, 2);
  e(0, 0) = 0.5;
  e(1, 1) = 0.25;
  const MatC lam = optimal_weight(e);
  REQUIRE(std::abs(lam(0, 0).real() - 2.0) < 1e-12);
  REQUIRE(std::abs(lam(1, 1).real() - 4.0) < 1e-12);
  REQUIRE(std::abs(lam(0, 1)) < 1e-12);

  SECTION("minimizes tr(Lambda E) - ln|Lambda| over PD weights") {
    Rng rng(9);
    const MatC mse = testing::random_pd(3, rng, 0.2);
    const MatC opt = optimal_weight(mse);
    const auto score = [&](const MatC& lam) {
      return (lam * mse).trace().real() - logdet_hpd(lam);
    };
    const double best = score(opt);
    for (int i = 0; i < 50; ++i) REQUIRE(best <= score(testing::random_pd(3, rng, 0.05)) + 1e-10);
  }

  SECTION("near-singular input is refused") {
    MatC bad = MatC::Identity(2, 2);
    bad(1, 1) = 1e-14;
    REQUIRE_THROWS_AS(optimal_weight(bad), std::runtime_error);
  }
}

TEST_CASE("MMSE bound matrix") {
  SECTION("zero effective channels give a zero matrix") {
    PrecoderAux aux;
    aux.g_tilde = {MatC::Zero(2, 8), MatC::Zero(2, 8)};
    aux.beta = VecR::Constant(2, 1.3);
    SystemConfig cfg = testing::small_config(8, 8, 2, 2, 2, 2);
    REQUIRE(mmse_bound_matrix(aux, cfg).norm() == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("rank-one channel: scalar Sherman-Morrison") {
    SystemConfig cfg = testing::small_config(8, 8, 2, 1, 1, 1);
    const cplx c{1.2, -0.7};
    PrecoderAux aux;
    MatC g = MatC::Zero(1, 8);
    g(0, 0) = c;
    aux.g_tilde = {g};
    const double phi = 0.9;
    aux.beta = VecR::Constant(1, phi);
    const MatC a = mmse_bound_matrix(aux, cfg);
    const double rho = 2.0 / 8.0;
    const double want = (std::norm(c) / phi) / (rho + std::norm(c) / phi);
    REQUIRE(std::abs(a(0, 0).real() - want) < 1e-12);
    REQUIRE(a.cwiseAbs().sum() == Catch::Approx(want).margin(1e-12));
  }

  SECTION("Hermitian PSD and J <= J_UB on random unit-modulus precoders") {
    const SystemConfig cfg = testing::small_config(16, 8, 4, 2, 2, 4, -4.0);
    const ChannelRealization ch = generate_channel(cfg, 30);
    HybridState st = testing::random_state(ch, cfg, 30, true, true);  // Lambda = I
    const PrecoderAux aux = make_precoder_aux(ch, st, cfg);
    const MatC a = mmse_bound_matrix(aux, cfg);
    REQUIRE((a - a.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<MatC> es(a, Eigen::EigenvaluesOnly);
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-10);

    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
      AnalogBeamformer f(Side::Tx, cfg.n_tx, cfg.n_tx_rf);
      testing::randomize_phases(f, rng);
      const MatC fx = f.expand();
      double j = 0.0;
      for (int k = 0; k < cfg.n_subcarriers; ++k) {
        const MatC t = aux.g_tilde[k] * fx;
        j += hermitian_inverse(MatC::Identity(cfg.n_streams, cfg.n_streams) +
                               (t * t.adjoint()) / aux.beta(k))
                 .trace()
                 .real();
      }
      j /= cfg.n_subcarriers;
      // J_UB = N^2/Nt_rf - N/(K Nt_rf) tr(F^H A F)
      const double j_ub =
          static_cast<double>(cfg.n_tx) * cfg.n_tx / cfg.n_tx_rf -
          static_cast<double>(cfg.n_tx) / (cfg.n_subcarriers * cfg.n_tx_rf) *
              (fx.adjoint() * a * fx).trace().real();
      REQUIRE(j <= j_ub + 1e-9);
    }
  }
}
