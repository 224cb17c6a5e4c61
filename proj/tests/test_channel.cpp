#include <catch2/catch_amalgamated.hpp>

#include "hbf/channel.hpp"
#include "hbf/testing.hpp"

using namespace hbf;

TEST_CASE("ULA response matches the closed form") {
  const VecC a4 = ula_response(0.0, {4});
  for (int p = 0; p < 4; ++p) {
    REQUIRE(a4(p).real() == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(a4(p).imag() == Catch::Approx(0.0).margin(1e-15));
  }

  const VecC a2 = ula_response(M_PI / 2, {2});
  REQUIRE(std::abs(a2(0) - cplx(1.0 / std::sqrt(2.0), 0.0)) < 1e-12);
  REQUIRE(std::abs(a2(1) - cplx(-1.0 / std::sqrt(2.0), 0.0)) < 1e-12);

  const VecC a8 = ula_response(0.3, {8});
  REQUIRE(std::abs(a8.norm() - 1.0) < 1e-12);
  for (int p = 0; p < 8; ++p)
    REQUIRE(std::abs(std::abs(a8(p)) - 1.0 / std::sqrt(8.0)) < 1e-12);

  Rng rng(42);
  for (int i = 0; i < 100; ++i)
    REQUIRE(std::abs(ula_response(rng.uniform(0.0, kTwoPi), {13}).norm() - 1.0) < 1e-12);
}

TEST_CASE("Laplacian angle sampling") {
  Rng rng(1);
  SECTION("degenerate spread collapses to the mean") {
    for (int i = 0; i < 10; ++i)
      REQUIRE(sample_laplacian_angle(1.0, 1e-14, rng) == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("circular mean over 1e5 draws") {
    double s = 0.0, c = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const double th = sample_laplacian_angle(M_PI, 0.1, rng);
      s += std::sin(th);
      c += std::cos(th);
    }
    double dist = std::abs(wrap_angle(std::atan2(s, c)) - M_PI);
    dist = std::min(dist, kTwoPi - dist);
    REQUIRE(dist < 0.01);
  }
  SECTION("sample variance matches 2 b^2") {
    const double b = 0.1;
    double sq = 0.0;
    for (int i = 0; i < 100000; ++i) {
      // mean pi keeps every draw far from the wrap point
      const double d = sample_laplacian_angle(M_PI, b, rng) - M_PI;
      sq += d * d;
    }
    REQUIRE(sq / 100000 == Catch::Approx(2 * b * b).epsilon(0.05));
  }
}

TEST_CASE("channel generation is a pure function of (config, seed)") {
  const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 8);
  const ChannelRealization a = generate_channel(cfg, 99);
  const ChannelRealization b = generate_channel(cfg, 99);
  REQUIRE(a.matrices.size() == 8);
  for (int k = 0; k < 8; ++k) {
    REQUIRE(a.matrices[k].rows() == 8);
    REQUIRE(a.matrices[k].cols() == 16);
    REQUIRE(a.matrices[k] == b.matrices[k]);  // bit identical
  }
  REQUIRE(a.gains == b.gains);
  const ChannelRealization c = generate_channel(cfg, 100);
  REQUIRE(a.matrices[0] != c.matrices[0]);
}

TEST_CASE("verbatim mode: every subcarrier is a scalar-phase copy") {
  const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 16);
  const ChannelRealization ch = generate_channel(cfg, 7);
  for (int k = 0; k < 16; ++k) {
    const cplx phi = std::polar(1.0, -kTwoPi * k / 16.0);
    const double rel = (ch.matrices[k] - phi * ch.matrices[0]).norm() /
                       ch.matrices[0].norm();
    REQUIRE(rel < 1e-12);
  }
}

TEST_CASE("delay-tap mode") {
  SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 8);
  cfg.cluster.delay_mode = DelayMode::DelayTap;

  SECTION("max_delay_taps = 1 reproduces verbatim bit-exactly") {
    cfg.cluster.max_delay_taps = 1;
    const ChannelRealization tap = generate_channel(cfg, 5);
    SystemConfig verb = cfg;
    verb.cluster.delay_mode = DelayMode::Verbatim;
    const ChannelRealization ref = generate_channel(verb, 5);
    for (int k = 0; k < 8; ++k) REQUIRE(tap.matrices[k] == ref.matrices[k]);
  }
  SECTION("delays land in [1, max_delay_taps]") {
    cfg.cluster.max_delay_taps = 4;
    const ChannelRealization ch = generate_channel(cfg, 5);
    for (int c = 0; c < cfg.cluster.n_clusters; ++c) {
      REQUIRE(ch.delays(c) >= 1);
      REQUIRE(ch.delays(c) <= 4);
    }
  }
  SECTION("rejects delays beyond the subcarrier count") {
    cfg.cluster.max_delay_taps = 9;  // K = 8
    REQUIRE_THROWS_AS(generate_channel(cfg, 5), std::invalid_argument);
  }
}

TEST_CASE("Frobenius energy concentrates at M*N") {
  // Monte-Carlo oracle: unit-norm steering vectors and unit-variance gains
  // force E||H||_F^2 = M*N under the sqrt(MN/(Nc Nr)) normalization.
  SystemConfig cfg;
  cfg.n_tx = 64;
  cfg.n_rx = 32;
  cfg.n_tx_rf = 4;
  cfg.n_rx_rf = 2;
  cfg.n_subcarriers = 1;
  cfg.validate();
  double acc = 0.0;
  const int n_draws = 2000;
  for (int i = 0; i < n_draws; ++i)
    acc += generate_channel(cfg, 1000 + i).matrices[0].squaredNorm();
  REQUIRE(acc / n_draws == Catch::Approx(64.0 * 32.0).epsilon(0.05));
}

TEST_CASE("channel dump round trip") {
  const SystemConfig cfg = testing::small_config(16, 8, 2, 2, 2, 4);
  const ChannelRealization ch = generate_channel(cfg, 31);
  const std::string path = "test_channel_dump.bin";
  dump_channel(ch, path);
  const ChannelRealization back = load_channel_dump(path);
  REQUIRE(back.seed == ch.seed);
  REQUIRE(back.matrices.size() == ch.matrices.size());
  for (std::size_t k = 0; k < ch.matrices.size(); ++k)
    REQUIRE(back.matrices[k] == ch.matrices[k]);
  std::remove(path.c_str());

  // 32-byte header with the magic up front
  dump_channel(ch, path);
  std::FILE* f = std::fopen(path.c_str(), "rb");
  char head[4];
  REQUIRE(std::fread(head, 1, 4, f) == 4);
  REQUIRE(std::memcmp(head, "HBFC", 4) == 0);
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fclose(f);
  REQUIRE(size == 32 + 4L * 8 * 16 * 2 * 8);
  std::remove(path.c_str());
}
