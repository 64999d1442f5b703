#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifsdf/vec3.hpp"

namespace ifsdf::geom {

// Maps raw coordinates into the normalized frame: q = (p - center) / scale.
struct NormalizationTransform {
  Vec3 center{0, 0, 0};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - center) / scale; }
  Vec3 invert(const Vec3& q) const { return q * scale + center; }
};

// Exact k-nearest-neighbor index with median splits. Ties are broken toward
// the lower point index so results are reproducible across platforms.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points);

  std::size_t size() const { return points_.size(); }

  // Indices of the k nearest points, ascending by (distance, index).
  std::vector<int> knn(const Vec3& query, int k) const;
  void knn(const Vec3& query, int k, std::vector<int>& out) const;

  // Single nearest neighbor.
  int nearest(const Vec3& query) const;

  // All indices within `radius` of the query (inclusive), ascending by index.
  std::vector<int> radius_search(const Vec3& query, double radius) const;

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);
  template <class Visit>
  void walk(const Vec3& query, double& prune2, Visit&& visit) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Raw input points P, assumed to lie on the surface, plus their spatial index.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points, int dim = 3);

  const std::vector<Vec3>& points() const { return points_; }
  const Vec3& point(int i) const { return points_[i]; }
  int count() const { return static_cast<int>(points_.size()); }
  int dim() const { return dim_; }
  const KdTree& index() const { return tree_; }

  Aabb bounds() const;

 private:
  std::vector<Vec3> points_;
  KdTree tree_;
  int dim_ = 3;
};

// Sampled query set Q with the cached nearest input point NN(q) and the fixed
// neighborhood N(NN(q), S_0) used by the filtering losses.
struct QueryBatch {
  std::vector<Vec3> queries;             // M positions
  std::vector<int> nn_index;             // M, nearest point of q in P
  std::vector<int> neighbor_indices;     // M * k, row-major
  int k = 0;

  int size() const { return static_cast<int>(queries.size()); }
  const int* neighbors(int i) const { return neighbor_indices.data() + static_cast<std::size_t>(i) * k; }
};

// Center at the bounding-box center and scale the max half-extent to 0.5.
// Throws InputError on an empty cloud, non-finite coordinates, or zero extent.
std::pair<PointCloud, NormalizationTransform> normalize(const PointCloud& cloud);

// Exact kNN against the cloud index; k must not exceed the point count.
std::vector<int> knn(const PointCloud& cloud, const Vec3& query, int k);

// Per-point Gaussian scale: distance from each point to its sigma_k-th nearest
// other point (the point itself is excluded from the count).
std::vector<double> query_sigmas(const PointCloud& cloud, int sigma_k);

// Draw `per_point` Gaussian samples around every input point and cache the
// nearest-neighbor data the filter needs. Deterministic for a fixed seed.
QueryBatch sample_queries(const PointCloud& cloud, int per_point, int sigma_k, int k_filter,
                          std::uint64_t seed);

// ASCII "x y z" lines; '#' starts a comment. dim=2 reads "x y" (z = 0), with
// commas accepted as separators.
std::vector<Vec3> read_xyz(const std::string& path, int dim = 3);
void write_xyz(const std::string& path, const std::vector<Vec3>& points);

}  // namespace ifsdf::geom
