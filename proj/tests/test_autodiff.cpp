#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ifsdf/autodiff.hpp"
#include "ifsdf/errors.hpp"
#include "ifsdf/net.hpp"
#include "oracles.hpp"

using namespace ifsdf;
using ad::ParamGrad;
using net::MlpField;

TEST_CASE("tape replay reproduces the forward value bit-identically") {
  const auto f = net::random_init({32, 32}, 2, 3, 100.0, 1);
  const Vec3 q{0.17, -0.42, 0.31};
  const auto tape = ad::Tape::record(f, q);
  CHECK(tape.value() == f.value(q));
  CHECK(tape.replay(f) == tape.value());
  CHECK(tape.gradient() == f.eval(q).gradient);
}

TEST_CASE("zero output row: bias gradient is one, hidden layers exactly zero") {
  auto f = net::random_init({16, 16}, 3);
  const auto& out_shape = f.shape(f.layer_count() - 1);
  for (int i = 0; i < out_shape.cols; ++i) f.w(f.layer_count() - 1)[i] = 0.0;
  const Vec3 q{0.2, 0.1, -0.3};
  const ParamGrad g = ad::grad_params_of_value(f, q);
  CHECK(g.v[out_shape.b_off] == 1.0);
  // f no longer depends on the hidden stack, so those adjoints are exact zeros.
  for (std::size_t i = 0; i < out_shape.w_off; ++i) CHECK(g.v[i] == 0.0);
  // The output-row gradients are the last activations; cross-check with FD.
  Rng rng(99);
  const auto dir = oracles::random_direction(g.size(), rng);
  double analytic = 0.0;
  for (std::size_t i = 0; i < dir.size(); ++i) analytic += g.v[i] * dir[i];
  const double fd = oracles::fd_param_directional(
      f, [&](const net::MlpField& m) { return m.value(q); }, dir);
  CHECK(oracles::rel_err(analytic, fd, 1e-7) < 1e-3);
}

TEST_CASE("grad_params_of_value matches directional finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = net::random_init({32, 32}, 100 + trial, 3, 100.0, 1);
    const Vec3 q{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const ParamGrad g = ad::grad_params_of_value(f, q);
    for (int rep = 0; rep < 4; ++rep) {
      const auto dir = oracles::random_direction(g.size(), rng);
      double analytic = 0.0;
      for (std::size_t i = 0; i < dir.size(); ++i) analytic += g.v[i] * dir[i];
      const double fd = oracles::fd_param_directional(
          f, [&](const MlpField& m) { return m.value(q); }, dir);
      CHECK(oracles::rel_err(analytic, fd, 1e-7) < 1e-3);
    }
  }
}

TEST_CASE("grad_params_of_value is deterministic") {
  const auto f = net::random_init({24, 24}, 9);
  const Vec3 q{0.3, 0.3, -0.1};
  const ParamGrad a = ad::grad_params_of_value(f, q);
  const ParamGrad b = ad::grad_params_of_value(f, q);
  CHECK(a.v == b.v);
}

TEST_CASE("grad_params_of_input_gradient: zero cotangent gives zero") {
  const auto f = net::random_init({16, 16}, 4);
  const ParamGrad g = ad::grad_params_of_input_gradient(f, {0.1, 0.2, 0.3}, {0, 0, 0});
  for (double x : g.v) CHECK(x == 0.0);
}

TEST_CASE("grad_params_of_input_gradient: one hidden layer closed form") {
  // f = w2 . softplus(W1 x + b1) + b2. With cotangent c on grad_x f:
  //   dPhi/dW1 = (s' ∘ w2) c^T + ((W1 c) ∘ s'' ∘ w2) x^T
  //   dPhi/db1 = (W1 c) ∘ s'' ∘ w2,  dPhi/dw2 = s' ∘ (W1 c),  dPhi/db2 = 0
  const double beta = 20.0;
  const auto f = net::random_init({8}, 5, 3, beta);
  const Vec3 x{0.21, -0.13, 0.34};
  const Vec3 c{0.7, -0.4, 0.2};
  const ParamGrad got = ad::grad_params_of_input_gradient(f, x, c);

  const auto& s0 = f.shape(0);
  const auto& s1 = f.shape(1);
  for (int o = 0; o < 8; ++o) {
    double z = f.b(0)[o];
    double w1c = 0.0;
    for (int i = 0; i < 3; ++i) {
      z += f.w(0)[o * 3 + i] * (&x.x)[i];
      w1c += f.w(0)[o * 3 + i] * (&c.x)[i];
    }
    const double sp1 = net::softplus_d1(z, beta);
    const double sp2 = net::softplus_d2(z, beta);
    const double w2 = f.w(1)[o];
    for (int i = 0; i < 3; ++i) {
      const double want = sp1 * w2 * (&c.x)[i] + w1c * sp2 * w2 * (&x.x)[i];
      CHECK(got.v[s0.w_off + o * 3 + i] == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(got.v[s0.b_off + o] == doctest::Approx(w1c * sp2 * w2).epsilon(1e-12));
    CHECK(got.v[s1.w_off + o] == doctest::Approx(sp1 * w1c).epsilon(1e-12));
  }
  CHECK(got.v[s1.b_off] == 0.0);
}

TEST_CASE("grad_params_of_input_gradient matches directional finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    const int skip = trial % 2 == 0 ? 1 : -1;
    const auto f = net::random_init({32, 32, 32}, 200 + trial, 3, 100.0, skip);
    const Vec3 q{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const Vec3 c{rng.normal(), rng.normal(), rng.normal()};
    const ParamGrad g = ad::grad_params_of_input_gradient(f, q, c);
    for (int rep = 0; rep < 3; ++rep) {
      const auto dir = oracles::random_direction(g.size(), rng);
      double analytic = 0.0;
      for (std::size_t i = 0; i < dir.size(); ++i) analytic += g.v[i] * dir[i];
      const double fd = oracles::fd_param_directional(
          f, [&](const MlpField& m) { return dot(c, m.eval(q).gradient); }, dir);
      CHECK(oracles::rel_err(analytic, fd, 1e-7) < 1e-3);
    }
  }
}

TEST_CASE("hessian_vec matches finite differences of the gradient") {
  Rng rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    const auto f = net::random_init({32, 32}, 300 + trial, 3, 50.0, 1);
    const Vec3 q{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const Vec3 hv = ad::hessian_vec(f, q, v);
    const double h = 1e-5;
    const Vec3 gp = f.eval(q + v * h).gradient;
    const Vec3 gm = f.eval(q - v * h).gradient;
    const Vec3 fd = (gp - gm) / (2.0 * h);
    for (int a = 0; a < 3; ++a)
      CHECK(oracles::rel_err((&hv.x)[a], (&fd.x)[a], 1e-4) < 2e-3);
  }
}

TEST_CASE("batched adjoints equal summed scalar tapes") {
  const auto f = net::random_init({32, 32, 32}, 41, 3, 100.0, 1);
  Rng rng(42);
  const int n = 70;  // exercises a ragged tail panel
  std::vector<Vec3> pts(n), dg(n), hv_in(n);
  std::vector<double> df(n);
  for (int i = 0; i < n; ++i) {
    pts[i] = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    dg[i] = {rng.normal(), rng.normal(), rng.normal()};
    hv_in[i] = {rng.normal(), rng.normal(), rng.normal()};
    df[i] = rng.normal();
  }
  ad::BatchEval be;
  be.evaluate(f, pts.data(), n, true, 2);

  ParamGrad batch_grad(f.n_params());
  be.param_backprop(df.data(), dg.data(), batch_grad);
  ParamGrad ref(f.n_params());
  for (int i = 0; i < n; ++i) ad::Tape::record(f, pts[i]).backprop(f, df[i], dg[i], ref);
  REQUIRE(batch_grad.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(batch_grad.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-9));

  std::vector<Vec3> hv_out(n);
  be.hessian_vec(hv_in.data(), hv_out.data());
  for (int i = 0; i < n; ++i) {
    const Vec3 want = ad::Tape::record(f, pts[i]).hessian_vec(f, hv_in[i]);
    CHECK(norm(hv_out[i] - want) <= 1e-10 * std::max(1.0, norm(want)));
  }
}

TEST_CASE("eval_values matches single-point values") {
  const auto f = net::random_init({48, 48}, 55, 3, 100.0, 1);
  const auto pts = oracles::random_cloud(101, 56);
  std::vector<double> vals(pts.size());
  ad::eval_values(f, pts.data(), pts.size(), vals.data(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    CHECK(vals[i] == doctest::Approx(f.value(pts[i])).epsilon(1e-13));
}

TEST_CASE("backprop is linear in the cotangents") {
  const auto f = net::random_init({16, 16}, 61);
  const Vec3 q{0.2, -0.2, 0.1};
  const auto tape = ad::Tape::record(f, q);
  ParamGrad g1(f.n_params()), g2(f.n_params()), gmix(f.n_params());
  tape.backprop(f, 1.0, {0.5, 0, 0}, g1);
  tape.backprop(f, -0.25, {0, 1.0, -2.0}, g2);
  tape.backprop(f, 1.0 * 3.0 + -0.25 * -2.0, {3.0 * 0.5 + -2.0 * 0.0,
                                               -2.0 * 1.0, -2.0 * -2.0}, gmix);
  // gmix seeds 3*c1 + (-2)*c2, so gmix == 3*g1 - 2*g2 up to rounding.
  for (std::size_t i = 0; i < gmix.size(); ++i)
    CHECK(gmix.v[i] == doctest::Approx(3.0 * g1.v[i] - 2.0 * g2.v[i]).epsilon(1e-10));
}

namespace {
class SquaredValueLoss : public ad::LossEvaluator {
 public:
  explicit SquaredValueLoss(Vec3 q) : q_(q) {}
  std::string_view name() const override { return "squared_value"; }
  double value(const MlpField& f, const geom::QueryBatch&) const override {
    const double v = f.value(q_);
    return v * v;
  }
  double value_and_grad(const MlpField& f, const geom::QueryBatch&,
                        ParamGrad& out) const override {
    const auto tape = ad::Tape::record(f, q_);
    tape.backprop(f, 2.0 * tape.value(), {0, 0, 0}, out);
    return tape.value() * tape.value();
  }

 private:
  Vec3 q_;
};

class BrokenLoss : public ad::LossEvaluator {
 public:
  std::string_view name() const override { return "broken_term"; }
  double value(const MlpField&, const geom::QueryBatch&) const override { return 1.0; }
  double value_and_grad(const MlpField&, const geom::QueryBatch&,
                        ParamGrad&) const override {
    return std::numeric_limits<double>::quiet_NaN();
  }
};
}  // namespace

TEST_CASE("grad_params_of_loss: composition and failure diagnostics") {
  const auto f = net::random_init({16, 16}, 71);
  const Vec3 q{0.15, 0.25, -0.35};
  geom::QueryBatch batch;
  batch.queries = {q};
  batch.nn_index = {0};
  batch.neighbor_indices = {0, 0};
  batch.k = 2;

  SquaredValueLoss loss(q);
  const auto [value, grad] = ad::grad_params_of_loss(loss, f, batch);
  CHECK(value == doctest::Approx(f.value(q) * f.value(q)));
  const ParamGrad direct = ad::grad_params_of_value(f, q);
  for (std::size_t i = 0; i < grad.size(); ++i)
    CHECK(grad.v[i] == doctest::Approx(2.0 * f.value(q) * direct.v[i]).epsilon(1e-12));

  BrokenLoss broken;
  CHECK_THROWS_WITH_AS(ad::grad_params_of_loss(broken, f, batch),
                       doctest::Contains("broken_term"), TrainingError);
  geom::QueryBatch empty;
  CHECK_THROWS_AS(ad::grad_params_of_loss(loss, f, empty), InputError);
}
