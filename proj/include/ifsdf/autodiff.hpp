#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "ifsdf/geom.hpp"
#include "ifsdf/net.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::ad {

// Gradient with respect to every network parameter, flat and shape-congruent
// with MlpField::params().
struct ParamGrad {
  std::vector<double> v;

  ParamGrad() = default;
  explicit ParamGrad(std::size_t n) : v(n, 0.0) {}

  std::size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
  void axpy(double a, const ParamGrad& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += a * o.v[i];
  }
  void scale(double a) {
    for (double& x : v) x *= a;
  }
  double dot(const ParamGrad& o) const {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * o.v[i];
    return s;
  }
  bool finite() const;
};

// Recorded forward evaluation of one query point: activations plus the
// reverse-sweep vectors. Replaying recomputes the value bit-identically, and
// the adjoint passes read these buffers.
class Tape {
 public:
  static Tape record(const net::MlpField& field, const Vec3& x);

  const Vec3& point() const { return x_; }
  double value() const { return f_; }
  const Vec3& gradient() const { return g_; }

  // Recompute the forward value from the recorded input.
  double replay(const net::MlpField& field) const;

  // Accumulate d(df * f + dg . grad f)/dtheta into `out`. Parameters that
  // cannot influence the seeded quantity receive exactly zero.
  void backprop(const net::MlpField& field, double df, const Vec3& dg, ParamGrad& out) const;

  // Spatial Hessian-vector product H(x) * v via a dual-number sweep over the
  // recorded reverse pass.
  Vec3 hessian_vec(const net::MlpField& field, const Vec3& v) const;

 private:
  Vec3 x_;
  double f_ = 0.0;
  Vec3 g_{0, 0, 0};
  std::vector<std::vector<double>> a_, sig_, r_;
  friend Tape record_impl(const net::MlpField&, const Vec3&);
};

// d f(q) / dtheta.
ParamGrad grad_params_of_value(const net::MlpField& field, const Vec3& q);

// d (cotangent . grad_q f(q)) / dtheta, the mixed second-order derivative the
// filtering losses need.
ParamGrad grad_params_of_input_gradient(const net::MlpField& field, const Vec3& q,
                                        const Vec3& cotangent);

// Spatial Hessian-vector product at q.
Vec3 hessian_vec(const net::MlpField& field, const Vec3& q, const Vec3& v);

// Batched evaluation over many points with retained tapes. Values and
// gradients are bit-identical to MlpField::eval; the batched adjoint passes
// accumulate per worker and reduce in worker order, so results are
// reproducible for a fixed thread count.
class BatchEval {
 public:
  BatchEval() = default;

  void evaluate(const net::MlpField& field, const Vec3* pts, int n, bool with_gradient,
                int threads);

  int size() const { return n_; }
  double value(int i) const { return f_[i]; }
  const double* values() const { return f_.data(); }
  Vec3 gradient(int i) const;

  // out[i] = H(x_i) * v[i] for every evaluated point.
  void hessian_vec(const Vec3* v, Vec3* out) const;

  // Accumulate sum_i d(df[i] * f_i + dg[i] . g_i)/dtheta into `out`.
  // dg may be null when only value cotangents are present.
  void param_backprop(const double* df, const Vec3* dg, ParamGrad& out) const;

 private:
  const net::MlpField* field_ = nullptr;
  int n_ = 0, threads_ = 1;
  bool with_gradient_ = false;
  int panels_ = 0, sum_h_ = 0;
  std::vector<double> xs_, f_, gs_;      // panel-major tapes
  std::vector<double> as_, sigs_, rs_;
  std::vector<int> layer_off_;           // feature offset per hidden layer
};

// Streaming value-only evaluation (no tapes); used for dense grids.
void eval_values(const net::MlpField& field, const Vec3* pts, std::size_t n, double* out,
                 int threads);

// A differentiable training objective. Implementations must honor their own
// declared stop-gradient boundaries so analytic gradients match finite
// differences of value().
class LossEvaluator {
 public:
  virtual ~LossEvaluator() = default;
  virtual std::string_view name() const = 0;
  virtual double value(const net::MlpField& field, const geom::QueryBatch& batch) const = 0;
  virtual double value_and_grad(const net::MlpField& field, const geom::QueryBatch& batch,
                                ParamGrad& out) const = 0;
};

// Drives a loss evaluator and validates the result: the returned value equals
// the plain forward evaluation, and non-finite losses or gradients raise
// TrainingError naming the term.
std::pair<double, ParamGrad> grad_params_of_loss(const LossEvaluator& loss,
                                                 const net::MlpField& field,
                                                 const geom::QueryBatch& batch);

}  // namespace ifsdf::ad
