#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "ifsdf/errors.hpp"
#include "ifsdf/mesher.hpp"
#include "oracles.hpp"

using namespace ifsdf;
using mesh::GridSpec;
using mesh::Mesh;

namespace {

mesh::FieldValuesFn sphere_values(double radius) {
  return [radius](const Vec3* pts, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = norm(pts[i]) - radius;
  };
}

GridSpec grid128() {
  GridSpec g;
  g.resolution = 128;
  return g;
}

// Undirected edge use-count; a closed surface uses every edge exactly twice.
std::map<std::pair<int, int>, int> edge_counts(const Mesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  return count;
}

}  // namespace

TEST_CASE("marching cubes: sphere vertices stay within one cell of the surface") {
  const GridSpec grid = grid128();
  const Mesh m = mesh::marching_cubes(sphere_values(0.4), grid, 0.0, 2);
  REQUIRE(!m.empty());
  const double h = grid.cell_size().x;
  for (const Vec3& v : m.vertices) {
    CHECK(norm(v) >= 0.4 - h);
    CHECK(norm(v) <= 0.4 + h);
  }
  for (const auto& t : m.triangles)
    for (int i : t) {
      CHECK(i >= 0);
      CHECK(i < static_cast<int>(m.vertices.size()));
    }
}

TEST_CASE("marching cubes: closed sphere topology and consistent orientation") {
  const GridSpec grid = grid128();
  const Mesh m = mesh::marching_cubes(sphere_values(0.4), grid, 0.0, 2);
  // Watertight: every undirected edge is shared by exactly two triangles.
  std::size_t edges = 0;
  for (const auto& [e, c] : edge_counts(m)) {
    CHECK(c == 2);
    ++edges;
  }
  // Euler characteristic of a sphere.
  CHECK(static_cast<long long>(m.vertices.size()) - static_cast<long long>(edges) +
            static_cast<long long>(m.triangles.size()) ==
        2);

  // Outward orientation: face normals align with the field gradient.
  int aligned = 0;
  for (const auto& t : m.triangles) {
    const Vec3 fn = cross(m.vertices[t[1]] - m.vertices[t[0]],
                          m.vertices[t[2]] - m.vertices[t[0]]);
    const Vec3 radial = m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]];
    if (dot(fn, radial) > 0.0) ++aligned;
  }
  CHECK(aligned >= static_cast<int>(0.99 * m.triangles.size()));

  // No degenerate triangles beyond the 1e-12 area floor.
  for (const auto& t : m.triangles) {
    const double area = 0.5 * norm(cross(m.vertices[t[1]] - m.vertices[t[0]],
                                         m.vertices[t[2]] - m.vertices[t[0]]));
    CHECK(area > 1e-12);
  }
}

TEST_CASE("marching cubes: no crossing gives an empty mesh") {
  const mesh::FieldValuesFn ones = [](const Vec3*, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 1.0;
  };
  GridSpec g;
  g.resolution = 16;
  const Mesh m = mesh::marching_cubes(ones, g, 0.0, 1);
  CHECK(m.empty());
}

TEST_CASE("marching cubes: non-zero iso offsets the sphere radius") {
  const GridSpec grid = grid128();
  const Mesh m0 = mesh::marching_cubes(sphere_values(0.4), grid, 0.0, 2);
  const Mesh m1 = mesh::marching_cubes(sphere_values(0.4), grid, 0.001, 2);
  auto mean_radius = [](const Mesh& m) {
    double s = 0.0;
    for (const Vec3& v : m.vertices) s += norm(v);
    return s / m.vertices.size();
  };
  const double r0 = mean_radius(m0), r1 = mean_radius(m1);
  CHECK(std::abs(r1 - 0.401) < grid.cell_size().x);
  CHECK(r1 - r0 == doctest::Approx(0.001).epsilon(0.25));
}

TEST_CASE("marching cubes: box SDF stays within a cell diagonal") {
  const Vec3 half{0.35, 0.25, 0.3};
  const mesh::FieldValuesFn box = [&](const Vec3* pts, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = oracles::box_sdf(pts[i], half);
  };
  const GridSpec grid = grid128();
  const Mesh m = mesh::marching_cubes(box, grid, 0.0, 2);
  REQUIRE(!m.empty());
  const double diag = norm(grid.cell_size());
  for (const Vec3& v : m.vertices) CHECK(std::abs(oracles::box_sdf(v, half)) <= diag);
}

TEST_CASE("marching cubes: grid validation and value-count checks") {
  GridSpec g;
  g.resolution = 4;
  CHECK_THROWS_AS(g.validate(), InputError);
  g.resolution = 16;
  std::vector<double> wrong(10, 1.0);
  CHECK_THROWS_AS(mesh::marching_cubes_from_values(wrong, g, 0.0), InputError);
}

TEST_CASE("sample_mesh_surface: single triangle barycentric validity") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  const auto s = mesh::sample_mesh_surface(m, 500, 5);
  for (const Vec3& p : s.points) {
    CHECK(p.x >= -1e-12);
    CHECK(p.y >= -1e-12);
    CHECK(p.x + p.y <= 1.0 + 1e-12);
    CHECK(p.z == 0.0);
  }
  // Face normal orientation for meshes without vertex normals.
  for (const Vec3& n : s.normals) CHECK(norm(n - Vec3{0, 0, 1}) < 1e-12);

  const auto again = mesh::sample_mesh_surface(m, 500, 5);
  CHECK(again.points == s.points);
  CHECK_THROWS_AS(mesh::sample_mesh_surface(Mesh{}, 10, 1), InputError);
}

TEST_CASE("sample_mesh_surface: area-weighted selection at ratio 3:1") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {10, 0, 0}, {11, 0, 0}, {10, 2, 0}};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};  // areas 3 and 1
  const int n = 100000;
  const auto s = mesh::sample_mesh_surface(m, n, 9);
  int big = 0;
  for (int t : s.triangle_of_point) big += t == 0 ? 1 : 0;
  const double p = 0.75;
  const double sigma = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(big - n * p) <= 3.0 * sigma);
}

TEST_CASE("sample_mesh_surface: sphere sampling matches surface statistics") {
  const GridSpec grid = grid128();
  const mesh::FieldValuesFn values = sphere_values(0.4);
  const mesh::FieldGradientFn gradient = [](const Vec3& p) { return normalized(p); };
  const Mesh m = mesh::marching_cubes(values, grid, 0.0, 2, &gradient);
  const auto s = mesh::sample_mesh_surface(m, 100000, 3);
  double sample_mean = 0.0;
  for (const Vec3& p : s.points) sample_mean += norm(p);
  sample_mean /= s.points.size();
  double vertex_mean = 0.0;
  for (const Vec3& v : m.vertices) vertex_mean += norm(v);
  vertex_mean /= m.vertices.size();
  CHECK(std::abs(sample_mean - vertex_mean) < 0.005 * vertex_mean);
  // Interpolated vertex normals are radial on the sphere.
  for (int i = 0; i < 1000; ++i)
    CHECK(dot(s.normals[i * 97 % s.normals.size()],
              normalized(s.points[i * 97 % s.points.size()])) > 0.99);
}
