#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ifsdf/mesher.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::metrics {

enum class ChamferOrder { kL1, kL2 };

// Mean nearest-neighbor distance from a to b (squared for L2).
double chamfer_one_sided(std::span<const Vec3> a, std::span<const Vec3> b, ChamferOrder order);
// Symmetric mean of the two one-sided terms.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b, ChamferOrder order);

double hausdorff_one_sided(std::span<const Vec3> a, std::span<const Vec3> b);
double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b);

// Mean |n_x . n_NN(x)| over both directions; normals must be unit length.
double normal_consistency(std::span<const Vec3> a_pts, std::span<const Vec3> a_normals,
                          std::span<const Vec3> b_pts, std::span<const Vec3> b_normals);

// Harmonic mean of precision and recall at the distance threshold.
double f_score(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold);

// Indices of points with a near-orthogonal neighbor normal within epsilon.
std::vector<int> edge_points(std::span<const Vec3> points, std::span<const Vec3> normals,
                             double epsilon, double sigma);

struct EcdResult {
  double l1 = 0.0, l2 = 0.0;
  bool pred_edges_empty = false, gt_edges_empty = false;
  bool fallback = false;  // an empty edge set was replaced by the full sample set
};

// Chamfer distance restricted to detected edge points of both surfaces,
// sampled with n_samples points each.
EcdResult edge_chamfer(const mesh::Mesh& pred, const mesh::Mesh& gt, int n_samples,
                       double epsilon, double sigma, std::uint64_t seed);

struct MetricsReport {
  double cd_l1 = 0, cd_l2 = 0;
  double one_sided_cd_pred = 0, one_sided_cd_gt = 0;
  double hausdorff = 0;
  double one_sided_hd_pred = 0, one_sided_hd_gt = 0;
  double normal_consistency = 0;
  bool nc_available = false;
  double f_score = 0;
  double f_score_threshold = 0.01;
  double ecd_l1 = 0, ecd_l2 = 0;
  bool ecd_available = false;
  bool ecd_fallback = false;
  double ecd_epsilon = 0.01, ecd_sigma = 0.1;
  int pred_samples = 0, gt_samples = 0;
};

struct EvalOptions {
  int samples = 100000;
  double fscore_threshold = 0.01;
  bool with_ecd = false;
  double ecd_epsilon = 0.01;
  double ecd_sigma = 0.1;
  std::uint64_t seed = 0;
};

// Mesh-vs-mesh protocol: sample both surfaces and compare.
MetricsReport evaluate(const mesh::Mesh& pred, const mesh::Mesh& gt, const EvalOptions& opt);
// Mesh-vs-points: normal consistency and ECD are reported unavailable.
MetricsReport evaluate(const mesh::Mesh& pred, std::span<const Vec3> gt_points,
                       const EvalOptions& opt);

// Flat key=value rendering ("unavailable" where a metric has no value).
std::string to_kv(const MetricsReport& report);
std::string csv_header();
std::string to_csv_row(const MetricsReport& report);

}  // namespace ifsdf::metrics
