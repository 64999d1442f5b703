#pragma once

#include <span>
#include <string>
#include <vector>

#include "ifsdf/autodiff.hpp"
#include "ifsdf/errors.hpp"
#include "ifsdf/geom.hpp"
#include "ifsdf/net.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::filter {

enum class SigmaPPolicy { kMaxNeighborDistance, kPatchDiagonal };
enum class Constraint { kChamfer, kPull };
enum class ZeroFilterMode { kBilateral, kAverage };

struct FilterConfig {
  double sigma_n_deg = 15.0;
  SigmaPPolicy sigma_p_policy = SigmaPPolicy::kMaxNeighborDistance;
  int k_filter = 16;
  double alpha1 = 1.0;   // level-set filtering weight
  double alpha2 = 1.0;   // surface distance weight
  double alpha3 = 10.0;  // gradient-constraint weight
  double weight_floor = 1e-12;
  Constraint constraint = Constraint::kChamfer;
  bool bidirectional = true;                          // project onto both normals
  bool include_zero = true;                           // zero-level filtering term on/off
  ZeroFilterMode zero_mode = ZeroFilterMode::kBilateral;
  double eikonal_weight = 0.0;                        // opt-in ablation term
  int per_point = 25;                                 // query samples per input point
  int sigma_k = 50;                                   // neighbor rank for the sampling scale

  void validate() const;  // throws InputError
};

struct FilterTermBreakdown {
  double l_dist = 0, l_zero = 0, l_field = 0, l_cd = 0, l_pull = 0, l_eikonal = 0;
  double total = 0;
};

// A point paired with the field sample at it.
struct FieldPoint {
  Vec3 position;
  net::SdfSample sdf;
};

// Spatial Gaussian phi: exp(-|p_bar - p_j|^2 / sigma_p^2).
double weight_spatial(const Vec3& p_bar, const Vec3& p_j, double sigma_p);

// Normal-similarity Gaussian psi: exp(-(1 - n_a . n_b) / (1 - cos sigma_n)).
// Inputs must be unit length within 1e-6.
double weight_normal(const Vec3& n_a, const Vec3& n_b, double sigma_n_deg);

// Move a query onto the zero set along the normalized gradient.
// Throws DegenerateGradientError when the gradient vanishes.
template <class Field>
Vec3 pull(const Field& field, const Vec3& q, double grad_floor = 1e-12) {
  const net::SdfSample s = field.eval(q);
  const double n = norm(s.gradient);
  if (!(n > grad_floor))
    throw DegenerateGradientError("pull: vanishing gradient at query (field collapse)");
  return q - s.gradient * (s.value / n);
}

// Offset surface points onto the `level` set along their own gradients.
template <class Field>
std::vector<Vec3> project_neighbors(const Field& field, double level,
                                    std::span<const Vec3> neighbors, double grad_floor = 1e-12) {
  std::vector<Vec3> out;
  out.reserve(neighbors.size());
  for (const Vec3& p : neighbors) {
    const net::SdfSample s = field.eval(p);
    const double n = norm(s.gradient);
    if (!(n > grad_floor))
      throw DegenerateGradientError("project_neighbors: vanishing gradient at surface point");
    out.push_back(p + s.gradient * (level / n));
  }
  return out;
}

// Weighted mean of bidirectional projection distances over a neighborhood,
// with weights combining spatial proximity and gradient similarity.
double bilateral_distance(const FieldPoint& center, std::span<const FieldPoint> neighbors,
                          const FilterConfig& cfg);

// Position-only Gaussian average of the neighborhood (the oversmoothing
// baseline the bilateral weights exist to avoid).
Vec3 average_filter_baseline(const Vec3& center, std::span<const Vec3> neighbors,
                             double sigma_p);

// Per-evaluation constants the engine treats as gradient-free: the selected
// query subset and the detached spatial bandwidths per query.
struct BatchPlan {
  std::vector<int> ids;        // indices into the QueryBatch
  std::vector<double> sp_zero;   // sigma_p for the pulled-center patches
  std::vector<double> sp_field;  // sigma_p for the in-place level-set patches
};

struct DegenerateStats {
  int queries = 0;
  int degenerate_pull = 0;    // queries whose own gradient vanished
  int degenerate_center = 0;  // pulled centers whose gradient vanished
};

// Build the frozen plan for a query subset (empty ids = every query).
BatchPlan make_plan(const net::MlpField& field, const geom::QueryBatch& batch,
                    const geom::PointCloud& cloud, const FilterConfig& cfg,
                    std::vector<int> ids = {}, int threads = 1);

// Loss terms and total under a frozen plan.
FilterTermBreakdown eval_loss(const net::MlpField& field, const geom::QueryBatch& batch,
                              const geom::PointCloud& cloud, const FilterConfig& cfg,
                              const BatchPlan& plan, int threads = 1,
                              DegenerateStats* stats = nullptr);

// Same forward values plus d total / d theta.
FilterTermBreakdown eval_loss_grad(const net::MlpField& field, const geom::QueryBatch& batch,
                                   const geom::PointCloud& cloud, const FilterConfig& cfg,
                                   const BatchPlan& plan, ad::ParamGrad& grad_out,
                                   int threads = 1, DegenerateStats* stats = nullptr);

// Convenience entry points over all queries with a fresh plan.
FilterTermBreakdown total_loss(const net::MlpField& field, const geom::QueryBatch& batch,
                               const geom::PointCloud& cloud, const FilterConfig& cfg,
                               int threads = 1);
double loss_dist(const net::MlpField& field, const geom::PointCloud& cloud, int threads = 1);
double loss_zero(const net::MlpField& field, const geom::QueryBatch& batch,
                 const geom::PointCloud& cloud, const FilterConfig& cfg, int threads = 1);
double loss_field(const net::MlpField& field, const geom::QueryBatch& batch,
                  const geom::PointCloud& cloud, const FilterConfig& cfg, int threads = 1);
double loss_cd(const net::MlpField& field, const geom::QueryBatch& batch,
               const geom::PointCloud& cloud, int threads = 1);
double loss_pull(const net::MlpField& field, const geom::QueryBatch& batch,
                 const geom::PointCloud& cloud, int threads = 1);

// Masked copies used to isolate one term; total equals that term exactly.
FilterConfig isolate_zero(FilterConfig cfg);
FilterConfig isolate_field(FilterConfig cfg);
FilterConfig isolate_dist(FilterConfig cfg);
FilterConfig isolate_cd(FilterConfig cfg);
FilterConfig isolate_pull(FilterConfig cfg);

// Adapter exposing the total objective through the autodiff driver.
class TotalLossEvaluator : public ad::LossEvaluator {
 public:
  TotalLossEvaluator(const geom::PointCloud& cloud, const FilterConfig& cfg,
                     const BatchPlan& plan, int threads = 1, std::string name = "total_loss")
      : cloud_(cloud), cfg_(cfg), plan_(plan), threads_(threads), name_(std::move(name)) {}

  std::string_view name() const override { return name_; }
  double value(const net::MlpField& field, const geom::QueryBatch& batch) const override {
    return eval_loss(field, batch, cloud_, cfg_, plan_, threads_).total;
  }
  double value_and_grad(const net::MlpField& field, const geom::QueryBatch& batch,
                        ad::ParamGrad& out) const override {
    return eval_loss_grad(field, batch, cloud_, cfg_, plan_, out, threads_).total;
  }
  const DegenerateStats& last_stats() const { return stats_; }

  // Trainer-facing variant that also reports the term breakdown and
  // degeneracy counters for the step.
  FilterTermBreakdown grad_with_breakdown(const net::MlpField& field,
                                          const geom::QueryBatch& batch, ad::ParamGrad& out) {
    return eval_loss_grad(field, batch, cloud_, cfg_, plan_, out, threads_, &stats_);
  }

 private:
  const geom::PointCloud& cloud_;
  const FilterConfig& cfg_;
  const BatchPlan& plan_;
  int threads_;
  std::string name_;
  DegenerateStats stats_;
};

// Plain-text key=value config (sigma_n_deg, sigma_p_policy, k_filter, alpha1,
// alpha2, alpha3, constraint, per_point, sigma_k, seed, ...).
struct ParsedFilterConfig {
  FilterConfig cfg;
  std::uint64_t seed = 0;
  bool has_seed = false;
};
ParsedFilterConfig parse_filter_config(const std::string& path);

}  // namespace ifsdf::filter
