#include "ifsdf/geom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ifsdf/errors.hpp"
#include "ifsdf/rng.hpp"

namespace ifsdf::geom {

namespace {

constexpr int kLeafSize = 16;

// Candidate ordering used everywhere: nearer first, lower index on ties.
struct Cand {
  double d2;
  int idx;
  bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && idx < o.idx); }
};

}  // namespace

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    root_ = build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    // Fixed leaf order keeps scans deterministic.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  Aabb box;
  for (int i = begin; i < end; ++i) box.expand(points_[order_[i]]);
  const Vec3 ext = box.extent();
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  node.axis = axis;
  node.split = points_[order_[mid]][axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

template <class Visit>
void KdTree::walk(const Vec3& query, double& prune2, Visit&& visit) const {
  // Iterative depth-first traversal, near side first.
  struct Frame {
    int node;
    double dist2;  // lower bound on distance^2 to the node's half-space
  };
  std::vector<Frame> stack;
  stack.push_back({root_, 0.0});
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.dist2 > prune2) continue;
    const Node& n = nodes_[f.node];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) visit(order_[i]);
      continue;
    }
    const double delta = query[n.axis] - n.split;
    const double off2 = f.dist2 + delta * delta;
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    stack.push_back({far, off2});
    stack.push_back({near, f.dist2});
  }
}

void KdTree::knn(const Vec3& query, int k, std::vector<int>& out) const {
  if (k <= 0) {
    out.clear();
    return;
  }
  if (k > static_cast<int>(points_.size()))
    throw InputError("knn: k=" + std::to_string(k) + " exceeds point count " +
                     std::to_string(points_.size()));
  // Max-heap of the current best k candidates; worst on top.
  std::vector<Cand> heap;
  heap.reserve(k);
  auto worse = [](const Cand& a, const Cand& b) { return a < b; };  // max-heap via operator<
  double prune2 = 1e300;
  walk(query, prune2, [&](int idx) {
    const Cand c{norm2(points_[idx] - query), idx};
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end(), worse);
    }
    if (static_cast<int>(heap.size()) == k) prune2 = heap.front().d2;
  });
  std::sort_heap(heap.begin(), heap.end(), worse);
  out.resize(k);
  for (int i = 0; i < k; ++i) out[i] = heap[i].idx;
}

std::vector<int> KdTree::knn(const Vec3& query, int k) const {
  std::vector<int> out;
  knn(query, k, out);
  return out;
}

int KdTree::nearest(const Vec3& query) const {
  Cand best{1e300, -1};
  double prune2 = 1e300;
  walk(query, prune2, [&](int idx) {
    const Cand c{norm2(points_[idx] - query), idx};
    if (c < best) {
      best = c;
      prune2 = best.d2;
    }
  });
  return best.idx;
}

std::vector<int> KdTree::radius_search(const Vec3& query, double radius) const {
  std::vector<int> out;
  if (points_.empty()) return out;
  double prune2 = radius * radius;
  const double r2 = radius * radius;
  walk(query, prune2, [&](int idx) {
    if (norm2(points_[idx] - query) <= r2) out.push_back(idx);
  });
  std::sort(out.begin(), out.end());
  return out;
}

PointCloud::PointCloud(std::vector<Vec3> points, int dim)
    : points_(std::move(points)), tree_(points_), dim_(dim) {
  if (dim != 2 && dim != 3) throw InputError("PointCloud: dim must be 2 or 3");
  for (const Vec3& p : points_)
    if (!is_finite(p)) throw InputError("PointCloud: non-finite coordinate");
}

Aabb PointCloud::bounds() const {
  Aabb box;
  for (const Vec3& p : points_) box.expand(p);
  return box;
}

std::pair<PointCloud, NormalizationTransform> normalize(const PointCloud& cloud) {
  if (cloud.count() == 0) throw InputError("normalize: empty cloud");
  const Aabb box = cloud.bounds();
  const Vec3 ext = box.extent();
  const double half = 0.5 * std::max({ext.x, ext.y, ext.z});
  if (half <= 0.0) throw InputError("normalize: zero extent (all points identical)");
  NormalizationTransform t;
  t.center = box.center();
  t.scale = half / 0.5;
  std::vector<Vec3> out(cloud.points().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.apply(cloud.point(static_cast<int>(i)));
  return {PointCloud(std::move(out), cloud.dim()), t};
}

std::vector<int> knn(const PointCloud& cloud, const Vec3& query, int k) {
  return cloud.index().knn(query, k);
}

std::vector<double> query_sigmas(const PointCloud& cloud, int sigma_k) {
  const int n = cloud.count();
  if (sigma_k < 1 || sigma_k > n)
    throw InputError("query_sigmas: sigma_k must be in [1, N]");
  const int k_eff = std::min(sigma_k + 1, n);  // +1 skips the point itself
  std::vector<double> sigmas(n);
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) {
    cloud.index().knn(cloud.point(i), k_eff, idx);
    sigmas[i] = norm(cloud.point(idx.back()) - cloud.point(i));
  }
  return sigmas;
}

QueryBatch sample_queries(const PointCloud& cloud, int per_point, int sigma_k, int k_filter,
                          std::uint64_t seed) {
  if (per_point < 0) throw InputError("sample_queries: per_point must be >= 0");
  if (k_filter < 2 || k_filter > cloud.count())
    throw InputError("sample_queries: k_filter must be in [2, N]");
  QueryBatch batch;
  batch.k = k_filter;
  if (per_point == 0) return batch;

  const std::vector<double> sigmas = query_sigmas(cloud, sigma_k);
  const int n = cloud.count();
  const int dim = cloud.dim();
  batch.queries.reserve(static_cast<std::size_t>(n) * per_point);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < per_point; ++s) {
      Vec3 q = cloud.point(i);
      for (int a = 0; a < dim; ++a) q[a] += sigmas[i] * rng.normal();
      batch.queries.push_back(q);
    }
  }

  const int m = batch.size();
  batch.nn_index.resize(m);
  batch.neighbor_indices.resize(static_cast<std::size_t>(m) * k_filter);
  std::vector<int> nb;
  for (int i = 0; i < m; ++i) {
    const int nn = cloud.index().nearest(batch.queries[i]);
    batch.nn_index[i] = nn;
    cloud.index().knn(cloud.point(nn), k_filter, nb);
    // nn is its own nearest neighbor except when exact duplicates crowd it
    // out; the batch contract wants it present either way.
    if (std::find(nb.begin(), nb.end(), nn) == nb.end()) nb.back() = nn;
    std::copy(nb.begin(), nb.end(),
              batch.neighbor_indices.begin() + static_cast<std::size_t>(i) * k_filter);
  }
  return batch;
}

std::vector<Vec3> read_xyz(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open point file: " + path);
  std::vector<Vec3> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ss(line);
    double x, y, z = 0.0;
    if (!(ss >> x)) continue;  // blank line
    const bool ok = dim == 2 ? static_cast<bool>(ss >> y) : static_cast<bool>(ss >> y >> z);
    if (!ok)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(dim) + " coordinates");
    points.push_back({x, y, z});
  }
  return points;
}

void write_xyz(const std::string& path, const std::vector<Vec3>& points) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write point file: " + path);
  out.precision(17);
  for (const Vec3& p : points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

}  // namespace ifsdf::geom
