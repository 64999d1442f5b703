// Independent reference implementations used to pin expected values in tests.
// Everything here is deliberately written straight from the defining formulas
// and stays decoupled from the library's optimized paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "ifsdf/net.hpp"
#include "ifsdf/rng.hpp"
#include "ifsdf/vec3.hpp"

namespace oracles {

using ifsdf::Rng;
using ifsdf::Vec3;

inline double rel_err(double got, double want, double floor = 1e-8) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

// --- geometry ---------------------------------------------------------------

inline std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, int k) {
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double da = norm2(pts[a] - q), db = norm2(pts[b] - q);
    return da < db || (da == db && a < b);
  });
  idx.resize(k);
  return idx;
}

// --- analytic fields ---------------------------------------------------------

struct PlaneField {  // f(x, y, z) = z
  ifsdf::net::SdfSample eval(const Vec3& q) const { return {q.z, {0, 0, 1}}; }
};

struct SphereField {  // f = |x - c| - r
  Vec3 center{0, 0, 0};
  double radius = 0.5;
  ifsdf::net::SdfSample eval(const Vec3& q) const {
    const Vec3 d = q - center;
    const double n = norm(d);
    return {n - radius, n > 1e-12 ? d / n : Vec3{1, 0, 0}};
  }
  double value(const Vec3& q) const { return eval(q).value; }
};

inline double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 d{std::abs(p.x) - half.x, std::abs(p.y) - half.y, std::abs(p.z) - half.z};
  const Vec3 outer{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
  return norm(outer) + std::min(std::max({d.x, d.y, d.z}), 0.0);
}

// An MlpField that is exactly f(x,y,z) = z: softplus(z) - softplus(-z) == z
// identically for every beta, so values and all derivatives are exact.
inline ifsdf::net::MlpField exact_plane_field(double beta = 100.0) {
  ifsdf::net::MlpField f(3, {2}, -1, beta);
  double* w0 = f.w(0);
  // rows: unit 0 sees +z, unit 1 sees -z
  w0[0] = 0; w0[1] = 0; w0[2] = 1;
  w0[3] = 0; w0[4] = 0; w0[5] = -1;
  f.b(0)[0] = 0; f.b(0)[1] = 0;
  f.w(1)[0] = 1; f.w(1)[1] = -1;
  f.b(1)[0] = 0;
  return f;
}

// --- finite differences -----------------------------------------------------

inline Vec3 fd_input_gradient(const ifsdf::net::MlpField& f, const Vec3& q, double h = 1e-4) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 qp = q, qm = q;
    (&qp.x)[a] += h;
    (&qm.x)[a] -= h;
    (&g.x)[a] = (f.value(qp) - f.value(qm)) / (2.0 * h);
  }
  return g;
}

// Central difference of an arbitrary scalar-of-parameters along a direction.
inline double fd_param_directional(ifsdf::net::MlpField f,
                                   const std::function<double(const ifsdf::net::MlpField&)>& fn,
                                   const std::vector<double>& dir, double h = 1e-4) {
  const std::vector<double> theta = f.params();
  for (std::size_t i = 0; i < theta.size(); ++i) f.params()[i] = theta[i] + h * dir[i];
  const double fp = fn(f);
  for (std::size_t i = 0; i < theta.size(); ++i) f.params()[i] = theta[i] - h * dir[i];
  const double fm = fn(f);
  return (fp - fm) / (2.0 * h);
}

inline std::vector<double> random_direction(std::size_t n, Rng& rng) {
  std::vector<double> d(n);
  double s = 0.0;
  for (double& x : d) {
    x = rng.normal();
    s += x * x;
  }
  s = std::sqrt(s);
  for (double& x : d) x /= s;
  return d;
}

// --- synthetic clouds ---------------------------------------------------------

inline std::vector<Vec3> sphere_cloud(int n, double radius, std::uint64_t seed,
                                      Vec3 center = {0, 0, 0}) {
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    p = center + normalized(v) * radius;
  }
  return pts;
}

// Uniform samples on the surface of an axis-aligned box (area-weighted faces).
inline std::vector<Vec3> box_cloud(int n, Vec3 half, std::uint64_t seed) {
  Rng rng(seed);
  const double ax = half.y * half.z, ay = half.x * half.z, az = half.x * half.y;
  const double total = 2.0 * (ax + ay + az);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    double u = rng.uniform() * total;
    int axis;
    double sign = 1.0;
    if (u < 2 * ax) {
      axis = 0;
      if (u >= ax) sign = -1.0;
    } else if (u < 2 * ax + 2 * ay) {
      axis = 1;
      if (u >= 2 * ax + ay) sign = -1.0;
    } else {
      axis = 2;
      if (u >= 2 * ax + 2 * ay + az) sign = -1.0;
    }
    Vec3 v{rng.uniform(-half.x, half.x), rng.uniform(-half.y, half.y),
           rng.uniform(-half.z, half.z)};
    (&v.x)[axis] = sign * (&half.x)[axis];
    p = v;
  }
  return pts;
}

inline std::vector<Vec3> plane_cloud(int n_side, double extent) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n_side) * n_side);
  for (int i = 0; i < n_side; ++i)
    for (int j = 0; j < n_side; ++j)
      pts.push_back({-extent + 2.0 * extent * i / (n_side - 1),
                     -extent + 2.0 * extent * j / (n_side - 1), 0.0});
  return pts;
}

inline std::vector<Vec3> random_cloud(int n, std::uint64_t seed, double extent = 0.5) {
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                           rng.uniform(-extent, extent)};
  return pts;
}

inline std::vector<Vec3> circle_cloud_2d(int n, double radius, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    const double t = rng.uniform() * 2.0 * M_PI;
    p = {radius * std::cos(t), radius * std::sin(t), 0.0};
  }
  return pts;
}

// --- scalar re-implementation of the bilateral projection distance ----------
// Straight-line transcription of the weighted bidirectional formula.

struct RefPatchPoint {
  Vec3 pos;
  Vec3 normal;  // unit
};

inline double ref_bilateral(const Vec3& center, const Vec3& n_center,
                            const std::vector<RefPatchPoint>& nbrs, double sigma_p,
                            double sigma_n_deg, bool bidirectional = true,
                            double floor = 1e-12) {
  const double kappa = 1.0 - std::cos(sigma_n_deg * M_PI / 180.0);
  double sw = 0.0, swa = 0.0;
  for (const auto& nb : nbrs) {
    const Vec3 o = center - nb.pos;
    const double phi = std::exp(-dot(o, o) / (sigma_p * sigma_p));
    const double psi = std::exp(-(1.0 - dot(n_center, nb.normal)) / kappa);
    double a = std::abs(dot(nb.normal, o));
    if (bidirectional) a += std::abs(dot(n_center, o));
    sw += phi * psi;
    swa += phi * psi * a;
  }
  return swa / std::max(sw, floor);
}

// --- brute-force set metrics --------------------------------------------------

inline double nn_dist(const Vec3& p, const std::vector<Vec3>& set) {
  double best = 1e300;
  for (const Vec3& q : set) best = std::min(best, norm(p - q));
  return best;
}

inline double ref_chamfer_l1(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sa = 0.0, sb = 0.0;
  for (const Vec3& p : a) sa += nn_dist(p, b);
  for (const Vec3& q : b) sb += nn_dist(q, a);
  return 0.5 * (sa / a.size() + sb / b.size());
}

inline double ref_chamfer_l2(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sa = 0.0, sb = 0.0;
  for (const Vec3& p : a) {
    const double d = nn_dist(p, b);
    sa += d * d;
  }
  for (const Vec3& q : b) {
    const double d = nn_dist(q, a);
    sb += d * d;
  }
  return 0.5 * (sa / a.size() + sb / b.size());
}

inline double ref_hausdorff_one_sided(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double worst = 0.0;
  for (const Vec3& p : a) worst = std::max(worst, nn_dist(p, b));
  return worst;
}

inline double ref_hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  return std::max(ref_hausdorff_one_sided(a, b), ref_hausdorff_one_sided(b, a));
}

}  // namespace oracles
