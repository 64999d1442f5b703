#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "ifsdf/autodiff.hpp"
#include "ifsdf/errors.hpp"
#include "ifsdf/net.hpp"
#include "oracles.hpp"

using namespace ifsdf;
using net::MlpField;

TEST_CASE("softplus saturation and smoothness") {
  CHECK(net::softplus(0.5, 100.0) == 0.5);
  CHECK(net::softplus(-0.5, 100.0) == 0.0);
  CHECK(net::softplus(0.0, 100.0) == doctest::Approx(std::log(2.0) / 100.0));
  CHECK(net::softplus_d1(0.0, 100.0) == doctest::Approx(0.5));
  CHECK(net::softplus_d2(0.0, 100.0) == doctest::Approx(25.0));
  // softplus(z) - softplus(-z) == z identically
  for (double z : {-2.0, -0.01, 0.0, 0.003, 1.7})
    CHECK(net::softplus(z, 100.0) - net::softplus(-z, 100.0) == doctest::Approx(z).epsilon(1e-15));
}

TEST_CASE("geometric init approximates the sphere SDF") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto f = net::geometric_init({64, 64, 64, 64}, 0.5, seed);
    Rng rng(seed + 100);
    double err = 0.0;
    int count = 0;
    while (count < 1000) {
      const Vec3 x{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      if (norm(x) <= 0.1) continue;
      err += std::abs(f.value(x) - (norm(x) - 0.5));
      ++count;
    }
    CHECK(err / count < 0.05);
  }
}

TEST_CASE("geometric init: surface, interior sign, outward gradient") {
  const auto f = net::geometric_init({64, 64, 64, 64}, 0.5, 9);
  CHECK(std::abs(f.value({0.5, 0, 0})) < 0.05);
  CHECK(f.value({0, 0, 0}) < 0.0);
  CHECK(f.eval({0.3, 0, 0}).gradient.x > 0.0);
}

TEST_CASE("eval gradient matches central finite differences") {
  const auto f = net::random_init({32, 32}, 5, 3, 100.0, 1);
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const net::SdfSample s = f.eval(q);
    const Vec3 fd = oracles::fd_input_gradient(f, q);
    for (int a = 0; a < 3; ++a) worst = std::max(worst, oracles::rel_err((&s.gradient.x)[a], (&fd.x)[a], 1e-6));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("eval is deterministic and batch equals single") {
  const auto f = net::random_init({48, 48, 48}, 17, 3, 100.0, 1);
  const Vec3 q{0.2, -0.1, 0.4};
  const auto s1 = f.eval(q);
  const auto s2 = f.eval(q);
  CHECK(s1.value == s2.value);
  CHECK(s1.gradient == s2.gradient);

  // Batch and single-point paths agree to rounding noise (the two loop
  // structures contract FMAs differently).
  std::vector<Vec3> pts = {q, {0.3, 0.3, -0.2}, {-0.5, 0.1, 0.05}};
  ad::BatchEval be;
  be.evaluate(f, pts.data(), static_cast<int>(pts.size()), true, 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto s = f.eval(pts[i]);
    CHECK(be.value(static_cast<int>(i)) == doctest::Approx(s.value).epsilon(1e-13));
    CHECK(norm(be.gradient(static_cast<int>(i)) - s.gradient) <= 1e-13);
  }
  // Re-running the batch path itself is bit-identical.
  ad::BatchEval be2;
  be2.evaluate(f, pts.data(), static_cast<int>(pts.size()), true, 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(be2.value(static_cast<int>(i)) == be.value(static_cast<int>(i)));
    CHECK(be2.gradient(static_cast<int>(i)) == be.gradient(static_cast<int>(i)));
  }
}

TEST_CASE("no NaN or Inf over the cube, bounded local variation") {
  const auto f = net::geometric_init({32, 32, 32}, 0.5, 23);
  Rng rng(24);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto s = f.eval(q);
    REQUIRE(std::isfinite(s.value));
    REQUIRE(is_finite(s.gradient));
    const double h = 1e-5;
    const Vec3 dq{h * rng.normal(), h * rng.normal(), h * rng.normal()};
    // Lipschitz-style bound: |df| <= (|grad| + slack) |dq|
    CHECK(std::abs(f.value(q + dq) - s.value) <= (norm(s.gradient) + 1.0) * norm(dq) + 1e-12);
  }
}

TEST_CASE("2d input variant evaluates and differentiates") {
  const auto f = net::random_init({24, 24}, 3, 2, 100.0, 1);
  const Vec3 q{0.2, -0.3, 0.0};
  const auto s = f.eval(q);
  CHECK(s.gradient.z == 0.0);
  const Vec3 fd = oracles::fd_input_gradient(f, q);
  CHECK(oracles::rel_err(s.gradient.x, fd.x, 1e-6) < 1e-3);
  CHECK(oracles::rel_err(s.gradient.y, fd.y, 1e-6) < 1e-3);
}

TEST_CASE("checkpoint round trip is bit identical") {
  auto f = net::geometric_init({32, 16, 32}, 0.4, 31, 3, 80.0, 1);
  f.norm.center = {0.5, -1.0, 2.0};
  f.norm.scale = 3.25;
  const char* path = "test_net_ckpt.ifsdf";
  net::save_checkpoint(f, path);
  const auto g = net::load_checkpoint(path);
  CHECK(g.input_dim() == f.input_dim());
  CHECK(g.hidden() == f.hidden());
  CHECK(g.skip_layer() == f.skip_layer());
  CHECK(g.beta() == f.beta());
  CHECK(g.norm.center == f.norm.center);
  CHECK(g.norm.scale == f.norm.scale);
  REQUIRE(g.params().size() == f.params().size());
  for (std::size_t i = 0; i < f.params().size(); ++i) CHECK(g.params()[i] == f.params()[i]);
  Rng rng(32);
  for (int i = 0; i < 20; ++i) {
    const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto a = f.eval(q), b = g.eval(q);
    CHECK(a.value == b.value);
    CHECK(a.gradient == b.gradient);
  }
  std::remove(path);
}

TEST_CASE("checkpoint loader rejects junk") {
  const char* path = "test_net_junk.bin";
  {
    std::FILE* fp = std::fopen(path, "wb");
    std::fputs("NOTACHECKPOINT", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(net::load_checkpoint(path), InputError);
  CHECK_THROWS_AS(net::load_checkpoint("missing_file.ifsdf"), InputError);
  std::remove(path);
}

TEST_CASE("invalid architectures are rejected") {
  CHECK_THROWS_AS(MlpField(4, {32}, -1, 100.0), InputError);
  CHECK_THROWS_AS(MlpField(3, {}, -1, 100.0), InputError);
  CHECK_THROWS_AS(MlpField(3, {32, 32}, 0, 100.0), InputError);
  CHECK_THROWS_AS(MlpField(3, {32, 32}, 5, 100.0), InputError);
  CHECK_THROWS_AS(net::geometric_init({32}, -0.5, 1), InputError);
}
