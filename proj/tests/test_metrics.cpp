#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ifsdf/errors.hpp"
#include "ifsdf/metrics.hpp"
#include "oracles.hpp"

using namespace ifsdf;
using metrics::ChamferOrder;

namespace {

mesh::Mesh box_mesh(Vec3 half) {
  mesh::Mesh m;
  // 8 corners, 12 triangles with outward winding.
  const double x = half.x, y = half.y, z = half.z;
  m.vertices = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
  m.triangles = {{0, 2, 1}, {0, 3, 2},   // -z
                 {4, 5, 6}, {4, 6, 7},   // +z
                 {0, 1, 5}, {0, 5, 4},   // -y
                 {2, 3, 7}, {2, 7, 6},   // +y
                 {1, 2, 6}, {1, 6, 5},   // +x
                 {3, 0, 4}, {3, 4, 7}};  // -x
  return m;
}

// Chamfered box extracted from an implicit intersection of the box with the
// twelve 45-degree edge cuts. No adjacent normals are near-orthogonal, so the
// edge detector finds nothing on it.
mesh::Mesh chamfered_box_mesh(double half, double w) {
  const double b = 2.0 * half - w;
  const mesh::FieldValuesFn values = [&](const Vec3* pts, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = std::abs(pts[i].x), y = std::abs(pts[i].y), z = std::abs(pts[i].z);
      double f = std::max({x, y, z}) - half;
      f = std::max(f, (x + y - b) / std::sqrt(2.0));
      f = std::max(f, (y + z - b) / std::sqrt(2.0));
      f = std::max(f, (x + z - b) / std::sqrt(2.0));
      out[i] = f;
    }
  };
  mesh::GridSpec grid;
  grid.resolution = 96;
  return mesh::marching_cubes(values, grid, 0.0, 2, nullptr);
}

}  // namespace

TEST_CASE("chamfer: identity, singletons, symmetry") {
  const auto pts = oracles::random_cloud(50, 3);
  CHECK(metrics::chamfer(pts, pts, ChamferOrder::kL1) == 0.0);
  CHECK(metrics::chamfer(pts, pts, ChamferOrder::kL2) == 0.0);

  const std::vector<Vec3> a = {{0, 0, 0}};
  const std::vector<Vec3> b = {{0.1, 0, 0}};
  CHECK(metrics::chamfer(a, b, ChamferOrder::kL1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(metrics::chamfer(a, b, ChamferOrder::kL2) == doctest::Approx(0.01).epsilon(1e-12));

  const auto c = oracles::random_cloud(80, 4);
  const auto d = oracles::random_cloud(60, 5);
  CHECK(metrics::chamfer(c, d, ChamferOrder::kL1) == metrics::chamfer(d, c, ChamferOrder::kL1));
  CHECK(metrics::hausdorff(c, d) == metrics::hausdorff(d, c));
  CHECK_THROWS_AS(metrics::chamfer({}, d, ChamferOrder::kL1), InputError);
}

TEST_CASE("chamfer and hausdorff match brute force on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = oracles::random_cloud(40 + static_cast<int>(rng.below(160)), 100 + trial);
    const auto b = oracles::random_cloud(40 + static_cast<int>(rng.below(160)), 200 + trial);
    CHECK(metrics::chamfer(a, b, ChamferOrder::kL1) ==
          doctest::Approx(oracles::ref_chamfer_l1(a, b)).epsilon(1e-9));
    CHECK(metrics::chamfer(a, b, ChamferOrder::kL2) ==
          doctest::Approx(oracles::ref_chamfer_l2(a, b)).epsilon(1e-9));
    CHECK(metrics::hausdorff(a, b) ==
          doctest::Approx(oracles::ref_hausdorff(a, b)).epsilon(1e-9));
    CHECK(metrics::hausdorff_one_sided(a, b) ==
          doctest::Approx(oracles::ref_hausdorff_one_sided(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("hausdorff: one-sided asymmetry fixture") {
  const std::vector<Vec3> a = {{0, 0, 0}};
  const std::vector<Vec3> b = {{0, 0, 0}, {5, 0, 0}};
  CHECK(metrics::hausdorff_one_sided(a, b) == 0.0);
  CHECK(metrics::hausdorff_one_sided(b, a) == 5.0);
  CHECK(metrics::hausdorff(a, b) == 5.0);
}

TEST_CASE("scaling both sets scales the metrics exactly") {
  const auto a = oracles::random_cloud(60, 11);
  const auto b = oracles::random_cloud(70, 12);
  auto scale = [](const std::vector<Vec3>& pts, double s) {
    std::vector<Vec3> out = pts;
    for (Vec3& p : out) p *= s;
    return out;
  };
  const auto a2 = scale(a, 2.0), b2 = scale(b, 2.0);
  CHECK(metrics::chamfer(a2, b2, ChamferOrder::kL1) ==
        2.0 * metrics::chamfer(a, b, ChamferOrder::kL1));
  CHECK(metrics::chamfer(a2, b2, ChamferOrder::kL2) ==
        4.0 * metrics::chamfer(a, b, ChamferOrder::kL2));
  CHECK(metrics::hausdorff(a2, b2) == 2.0 * metrics::hausdorff(a, b));

  const double s = 0.731;
  const auto as = scale(a, s), bs = scale(b, s);
  CHECK(metrics::chamfer(as, bs, ChamferOrder::kL1) ==
        doctest::Approx(s * metrics::chamfer(a, b, ChamferOrder::kL1)).epsilon(1e-12));
  CHECK(metrics::chamfer(as, bs, ChamferOrder::kL2) ==
        doctest::Approx(s * s * metrics::chamfer(a, b, ChamferOrder::kL2)).epsilon(1e-12));
}

TEST_CASE("normal consistency: identical, orthogonal, brute force") {
  const auto pts = oracles::random_cloud(60, 13);
  std::vector<Vec3> normals(pts.size());
  Rng rng(14);
  for (Vec3& n : normals) n = normalized({rng.normal(), rng.normal(), rng.normal()});
  CHECK(metrics::normal_consistency(pts, normals, pts, normals) == doctest::Approx(1.0));

  std::vector<Vec3> flipped(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // A vector orthogonal to normals[i].
    const Vec3 ref = std::abs(normals[i].x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    flipped[i] = normalized(cross(normals[i], ref));
  }
  CHECK(metrics::normal_consistency(pts, normals, pts, flipped) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Brute force on a random pair.
  const auto qts = oracles::random_cloud(40, 15);
  std::vector<Vec3> qnormals(qts.size());
  for (Vec3& n : qnormals) n = normalized({rng.normal(), rng.normal(), rng.normal()});
  double fwd = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = 1e300;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < qts.size(); ++j) {
      const double d = norm2(pts[i] - qts[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    fwd += std::abs(dot(normals[i], qnormals[arg]));
  }
  double bwd = 0.0;
  for (std::size_t j = 0; j < qts.size(); ++j) {
    double best = 1e300;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = norm2(qts[j] - pts[i]);
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    bwd += std::abs(dot(qnormals[j], normals[arg]));
  }
  const double want = 0.5 * (fwd / pts.size() + bwd / qts.size());
  CHECK(metrics::normal_consistency(pts, normals, qts, qnormals) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("f_score: identity, disjoint, half-in") {
  const auto pts = oracles::random_cloud(50, 17);
  CHECK(metrics::f_score(pts, pts, 0.01) == doctest::Approx(1.0));

  std::vector<Vec3> far = pts;
  for (Vec3& p : far) p += Vec3{10, 0, 0};
  CHECK(metrics::f_score(pts, far, 0.01) == 0.0);

  // Exactly half of each set within threshold of the other.
  const std::vector<Vec3> pred = {{0, 0, 0}, {5, 0, 0}};
  const std::vector<Vec3> gt = {{0.001, 0, 0}, {9, 0, 0}};
  CHECK(metrics::f_score(pred, gt, 0.01) == doctest::Approx(0.5));
}

TEST_CASE("edge_points: plane, crease, sphere") {
  // Flat grid: all normals parallel, no edges.
  std::vector<Vec3> plane = oracles::plane_cloud(20, 0.4);
  std::vector<Vec3> up(plane.size(), Vec3{0, 0, 1});
  CHECK(metrics::edge_points(plane, up, 0.05, 0.1).empty());

  // Two perpendicular half-planes meeting along the y axis.
  std::vector<Vec3> crease;
  std::vector<Vec3> normals;
  const int side = 40;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const double t = 0.4 * i / (side - 1) + 1e-4;  // distance from the crease
      const double y = -0.2 + 0.4 * j / (side - 1);
      crease.push_back({t, y, 0});
      normals.push_back({0, 0, 1});
      crease.push_back({0, y, t});
      normals.push_back({1, 0, 0});
    }
  const double eps = 0.02;
  const auto edges = metrics::edge_points(crease, normals, eps, 0.1);
  CHECK(!edges.empty());
  for (int idx : edges) {
    const Vec3& p = crease[idx];
    CHECK(std::min(p.x, p.z) <= eps + 1e-9);  // only points near the crease line
  }

  // Smooth sphere sampling: normals within epsilon never near-orthogonal.
  const auto sphere = oracles::sphere_cloud(5000, 0.4, 19);
  std::vector<Vec3> radial(sphere.size());
  for (std::size_t i = 0; i < sphere.size(); ++i) radial[i] = normalized(sphere[i]);
  CHECK(metrics::edge_points(sphere, radial, 0.01, 0.1).empty());
}

TEST_CASE("edge_chamfer: identical boxes give zero; bevel trips the fallback") {
  const mesh::Mesh cube = box_mesh({0.5, 0.5, 0.5});
  const auto same = metrics::edge_chamfer(cube, cube, 20000, 0.01, 0.1, 5);
  CHECK(!same.pred_edges_empty);
  CHECK(!same.gt_edges_empty);
  CHECK(same.l1 == 0.0);
  CHECK(same.l2 == 0.0);

  // A sphere has no detected edges at this protocol; fallback engages.
  mesh::GridSpec grid;
  grid.resolution = 96;
  const mesh::FieldValuesFn sphere_values = [](const Vec3* pts, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = norm(pts[i]) - 0.4;
  };
  const mesh::FieldGradientFn sphere_grad = [](const Vec3& p) { return normalized(p); };
  const mesh::Mesh sphere = mesh::marching_cubes(sphere_values, grid, 0.0, 2, &sphere_grad);
  const auto fb = metrics::edge_chamfer(cube, sphere, 20000, 0.01, 0.1, 6);
  CHECK(fb.gt_edges_empty);
  CHECK(fb.fallback);
  CHECK(fb.l1 > 0.0);
}

TEST_CASE("edge_chamfer: beveling raises ECD while CD barely moves") {
  const mesh::Mesh cube = box_mesh({0.45, 0.45, 0.45});
  const mesh::Mesh beveled = chamfered_box_mesh(0.45, 0.06);
  REQUIRE(!beveled.empty());

  const auto sp = mesh::sample_mesh_surface(cube, 20000, 3);
  const auto sb = mesh::sample_mesh_surface(beveled, 20000, 3);
  const double cd = metrics::chamfer(sp.points, sb.points, ChamferOrder::kL1);

  const auto ecd = metrics::edge_chamfer(cube, beveled, 20000, 0.01, 0.1, 4);
  CHECK(!ecd.pred_edges_empty);
  CHECK(ecd.gt_edges_empty);  // 45-degree chamfers defeat the detector
  CHECK(ecd.fallback);
  CHECK(ecd.l1 > 0.0);
  // The cube's sharp edges sit w-ish away from the chamfer strips, while the
  // surfaces as a whole nearly coincide.
  CHECK(ecd.l1 > 1.5 * cd);
  CHECK(cd < 0.03);
}

TEST_CASE("evaluate: mesh against itself is perfect; points-only drops NC") {
  const mesh::Mesh cube = box_mesh({0.5, 0.4, 0.3});
  metrics::EvalOptions opt;
  opt.samples = 20000;
  opt.with_ecd = true;
  const auto r = metrics::evaluate(cube, cube, opt);
  CHECK(r.cd_l1 == 0.0);
  CHECK(r.cd_l2 == 0.0);
  CHECK(r.hausdorff == 0.0);
  CHECK(r.normal_consistency == doctest::Approx(1.0));
  CHECK(r.f_score == doctest::Approx(1.0));
  CHECK(r.nc_available);
  CHECK(r.ecd_available);
  CHECK(r.ecd_l1 == 0.0);

  const auto pts = oracles::box_cloud(5000, {0.5, 0.4, 0.3}, 7);
  const auto rp = metrics::evaluate(cube, pts, opt);
  CHECK(!rp.nc_available);
  CHECK(!rp.ecd_available);
  CHECK(rp.cd_l1 < 0.02);
  const std::string kv = metrics::to_kv(rp);
  CHECK(kv.find("normal_consistency=unavailable") != std::string::npos);
  CHECK(kv.find("ecd_l1=unavailable") != std::string::npos);
}
