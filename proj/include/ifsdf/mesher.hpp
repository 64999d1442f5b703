#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ifsdf/net.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::mesh {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> normals;  // optional, per vertex

  bool empty() const { return triangles.empty(); }
  bool has_normals() const { return normals.size() == vertices.size(); }
};

struct GridSpec {
  int resolution = 256;  // cells per axis; resolution+1 samples
  Vec3 lo{-0.55, -0.55, -0.55};
  Vec3 hi{0.55, 0.55, 0.55};

  void validate() const;  // resolution >= 8, non-empty box
  Vec3 cell_size() const {
    return {(hi.x - lo.x) / resolution, (hi.y - lo.y) / resolution,
            (hi.z - lo.z) / resolution};
  }
  Vec3 position(int ix, int iy, int iz) const {
    const Vec3 c = cell_size();
    return {lo.x + c.x * ix, lo.y + c.y * iy, lo.z + c.z * iz};
  }
};

extern const int kEdgeTable[256];
extern const int kTriTable[256][16];

// Batched field sampler: fills out[i] = f(pts[i]).
using FieldValuesFn = std::function<void(const Vec3*, std::size_t, double*)>;
// Per-point spatial gradient, used for vertex normals.
using FieldGradientFn = std::function<Vec3(const Vec3&)>;

// Dense corner samples in x-fastest order, parallel over z-slabs.
std::vector<double> sample_grid(const FieldValuesFn& values, const GridSpec& grid, int threads);

// Core extraction from precomputed corner values. Shared-edge vertices are
// computed once, so adjacent cells reference bit-identical positions. Returns
// an empty mesh when the iso level crosses nothing.
Mesh marching_cubes_from_values(const std::vector<double>& corner_values, const GridSpec& grid,
                                double iso);

// Convenience drivers.
Mesh marching_cubes(const net::MlpField& field, const GridSpec& grid, double iso, int threads);
Mesh marching_cubes(const FieldValuesFn& values, const GridSpec& grid, double iso, int threads,
                    const FieldGradientFn* gradient = nullptr);

// Per-vertex normals from the field gradient.
void assign_field_normals(Mesh& mesh, const net::MlpField& field, int threads);

double mesh_area(const Mesh& mesh);

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;           // unit; interpolated vertex normals when
                                       // present, face normals otherwise
  std::vector<int> triangle_of_point;  // source triangle per sample
};

// Area-weighted uniform surface sampling, deterministic by seed.
SurfaceSample sample_mesh_surface(const Mesh& mesh, int n, std::uint64_t seed);

}  // namespace ifsdf::mesh
