#include "ifsdf/mesher.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ifsdf/autodiff.hpp"
#include "ifsdf/errors.hpp"
#include "ifsdf/parallel.hpp"
#include "ifsdf/rng.hpp"

namespace ifsdf::mesh {

void GridSpec::validate() const {
  if (resolution < 8) throw InputError("grid resolution must be at least 8");
  if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z))
    throw InputError("grid bounds are empty");
}

std::vector<double> sample_grid(const FieldValuesFn& values, const GridSpec& grid, int threads) {
  grid.validate();
  const int g = grid.resolution + 1;
  std::vector<double> out(static_cast<std::size_t>(g) * g * g);
  parallel_for(g, threads, [&](std::size_t zb, std::size_t ze, int) {
    std::vector<Vec3> slab(static_cast<std::size_t>(g) * g);
    for (std::size_t iz = zb; iz < ze; ++iz) {
      std::size_t at = 0;
      for (int iy = 0; iy < g; ++iy)
        for (int ix = 0; ix < g; ++ix)
          slab[at++] = grid.position(ix, iy, static_cast<int>(iz));
      values(slab.data(), slab.size(), out.data() + iz * g * g);
    }
  });
  return out;
}

namespace {

// Cube corners in the table convention: bit i corresponds to corner i.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// Canonical identity of each cell edge: axis + grid offset of its origin.
struct EdgeId {
  int axis, dx, dy, dz;
};
constexpr EdgeId kEdgeId[12] = {
    {0, 0, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 0}, {1, 0, 0, 0},
    {0, 0, 0, 1}, {1, 1, 0, 1}, {0, 0, 1, 1}, {1, 0, 0, 1},
    {2, 0, 0, 0}, {2, 1, 0, 0}, {2, 1, 1, 0}, {2, 0, 1, 0},
};

}  // namespace

Mesh marching_cubes_from_values(const std::vector<double>& corner_values, const GridSpec& grid,
                                double iso) {
  grid.validate();
  const int g = grid.resolution + 1;
  if (corner_values.size() != static_cast<std::size_t>(g) * g * g)
    throw InputError("marching_cubes: corner sample count does not match the grid");
  const auto at = [&](int ix, int iy, int iz) -> double {
    return corner_values[(static_cast<std::size_t>(iz) * g + iy) * g + ix];
  };

  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  edge_vertex.reserve(1 << 16);

  const auto edge_key = [&](int axis, int ix, int iy, int iz) -> std::uint64_t {
    return ((static_cast<std::uint64_t>(axis) * g + iz) * g + iy) * g + ix;
  };

  double corner[8];
  int cell_vertex[12];
  for (int iz = 0; iz < grid.resolution; ++iz)
    for (int iy = 0; iy < grid.resolution; ++iy)
      for (int ix = 0; ix < grid.resolution; ++ix) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = at(ix + kCorner[c][0], iy + kCorner[c][1], iz + kCorner[c][2]);
          if (corner[c] < iso) cube |= 1 << c;
        }
        const int edges = kEdgeTable[cube];
        if (edges == 0) continue;
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const EdgeId& id = kEdgeId[e];
          const std::uint64_t key = edge_key(id.axis, ix + id.dx, iy + id.dy, iz + id.dz);
          const auto found = edge_vertex.find(key);
          if (found != edge_vertex.end()) {
            cell_vertex[e] = found->second;
            continue;
          }
          int a = kEdgeEnds[e][0], b = kEdgeEnds[e][1];
          // Interpolate from the axis-origin corner so the vertex position
          // does not depend on which adjacent cell created it.
          if (kCorner[a][id.axis] > kCorner[b][id.axis]) std::swap(a, b);
          const Vec3 pa = grid.position(ix + kCorner[a][0], iy + kCorner[a][1], iz + kCorner[a][2]);
          const Vec3 pb = grid.position(ix + kCorner[b][0], iy + kCorner[b][1], iz + kCorner[b][2]);
          const double va = corner[a], vb = corner[b];
          double t = va == vb ? 0.5 : (iso - va) / (vb - va);
          t = std::clamp(t, 0.0, 1.0);
          const Vec3 p = pa + (pb - pa) * t;
          const int idx = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(p);
          edge_vertex.emplace(key, idx);
          cell_vertex[e] = idx;
        }
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          // Swapped winding keeps face normals aligned with the gradient
          // (outward for a signed distance field) under this corner layout.
          const int i0 = cell_vertex[kTriTable[cube][t]];
          const int i1 = cell_vertex[kTriTable[cube][t + 2]];
          const int i2 = cell_vertex[kTriTable[cube][t + 1]];
          if (i0 == i1 || i1 == i2 || i0 == i2) continue;
          const Vec3 area2 = cross(mesh.vertices[i1] - mesh.vertices[i0],
                                   mesh.vertices[i2] - mesh.vertices[i0]);
          if (0.5 * norm(area2) <= 1e-12) continue;
          mesh.triangles.push_back({i0, i1, i2});
        }
      }
  return mesh;
}

Mesh marching_cubes(const FieldValuesFn& values, const GridSpec& grid, double iso, int threads,
                    const FieldGradientFn* gradient) {
  const std::vector<double> samples = sample_grid(values, grid, threads);
  Mesh mesh = marching_cubes_from_values(samples, grid, iso);
  if (gradient && !mesh.vertices.empty()) {
    mesh.normals.resize(mesh.vertices.size());
    parallel_for(mesh.vertices.size(), threads, [&](std::size_t b, std::size_t e, int) {
      for (std::size_t i = b; i < e; ++i) mesh.normals[i] = normalized((*gradient)(mesh.vertices[i]));
    });
  }
  return mesh;
}

Mesh marching_cubes(const net::MlpField& field, const GridSpec& grid, double iso, int threads) {
  const FieldValuesFn values = [&](const Vec3* pts, std::size_t n, double* out) {
    ad::eval_values(field, pts, n, out, 1);
  };
  Mesh mesh = marching_cubes(values, grid, iso, threads, nullptr);
  assign_field_normals(mesh, field, threads);
  return mesh;
}

void assign_field_normals(Mesh& mesh, const net::MlpField& field, int threads) {
  if (mesh.vertices.empty()) {
    mesh.normals.clear();
    return;
  }
  ad::BatchEval be;
  be.evaluate(field, mesh.vertices.data(), static_cast<int>(mesh.vertices.size()), true,
              threads);
  mesh.normals.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    mesh.normals[i] = normalized(be.gradient(static_cast<int>(i)));
}

double mesh_area(const Mesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles)
    area += 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                             mesh.vertices[t[2]] - mesh.vertices[t[0]]));
  return area;
}

SurfaceSample sample_mesh_surface(const Mesh& mesh, int n, std::uint64_t seed) {
  if (mesh.empty()) throw InputError("sample_mesh_surface: empty mesh");
  if (n < 0) throw InputError("sample_mesh_surface: negative sample count");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += 0.5 * norm(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                              mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
    cum[t] = total;
  }
  if (!(total > 0.0)) throw InputError("sample_mesh_surface: mesh has zero area");

  SurfaceSample out;
  out.points.resize(n);
  out.normals.resize(n);
  out.triangle_of_point.resize(n);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const std::size_t t =
        std::min(static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) -
                                          cum.begin()),
                 cum.size() - 1);
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const double w0 = 1.0 - r1, w1 = r1 * (1.0 - r2), w2 = r1 * r2;
    out.points[i] = mesh.vertices[tri[0]] * w0 + mesh.vertices[tri[1]] * w1 +
                    mesh.vertices[tri[2]] * w2;
    out.triangle_of_point[i] = static_cast<int>(t);
    if (mesh.has_normals()) {
      out.normals[i] = normalized(mesh.normals[tri[0]] * w0 + mesh.normals[tri[1]] * w1 +
                                  mesh.normals[tri[2]] * w2);
    } else {
      out.normals[i] = normalized(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                                        mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
    }
  }
  return out;
}

}  // namespace ifsdf::mesh
