#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifsdf/geom.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::net {

// Field value and its exact spatial gradient at one query.
struct SdfSample {
  double value = 0.0;
  Vec3 gradient{0, 0, 0};
};

// Fully connected SDF network f_theta. Hidden layers use softplus with
// sharpness beta (smooth everywhere, so spatial gradients stay differentiable
// with respect to the parameters). One hidden layer may re-concatenate the
// raw input to its incoming activations (skip_layer, 0-based; -1 = none).
class MlpField {
 public:
  MlpField() = default;
  MlpField(int input_dim, std::vector<int> hidden, int skip_layer, double beta);

  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  int skip_layer() const { return skip_layer_; }
  double beta() const { return beta_; }
  int layer_count() const { return static_cast<int>(hidden_.size()) + 1; }

  struct LayerShape {
    int rows = 0, cols = 0;
    std::size_t w_off = 0, b_off = 0;
  };
  const LayerShape& shape(int layer) const { return shapes_[layer]; }
  // Column count of the activation part of a layer's input (the rest, if any,
  // is the re-concatenated raw input).
  int act_cols(int layer) const;

  std::size_t n_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const double* w(int layer) const { return params_.data() + shapes_[layer].w_off; }
  const double* b(int layer) const { return params_.data() + shapes_[layer].b_off; }
  double* w(int layer) { return params_.data() + shapes_[layer].w_off; }
  double* b(int layer) { return params_.data() + shapes_[layer].b_off; }

  // Plain single-point evaluation; the batched engine lives in autodiff.
  double value(const Vec3& q) const;
  SdfSample eval(const Vec3& q) const;

  // Transform between raw input coordinates and the normalized frame the
  // field was trained in; carried through checkpoints.
  geom::NormalizationTransform norm;

 private:
  int input_dim_ = 3;
  std::vector<int> hidden_;
  int skip_layer_ = -1;
  double beta_ = 100.0;
  std::vector<int> act_cols_;
  std::vector<LayerShape> shapes_;
  std::vector<double> params_;
};

// Softplus pieces shared by the evaluators. Saturated inputs take exact
// linear/zero branches so the activation never overflows at large beta.
double softplus(double z, double beta);
double softplus_d1(double z, double beta);   // sigmoid(beta z)
double softplus_d2(double z, double beta);   // beta s (1 - s)

// SAL-style geometric initialization: the fresh network approximates the
// signed distance of an origin-centered sphere with the given radius.
// skip_layer = -2 picks the middle hidden layer automatically.
MlpField geometric_init(const std::vector<int>& hidden, double radius, std::uint64_t seed,
                        int input_dim = 3, double beta = 100.0, int skip_layer = -2);

// Gaussian init for tests and finite-difference checks.
MlpField random_init(const std::vector<int>& hidden, std::uint64_t seed, int input_dim = 3,
                     double beta = 100.0, int skip_layer = -1);

// Versioned binary checkpoint, header magic "IFSDF1".
void save_checkpoint(const MlpField& field, const std::string& path);
MlpField load_checkpoint(const std::string& path);

}  // namespace ifsdf::net
