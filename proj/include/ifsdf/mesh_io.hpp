#pragma once

#include <string>
#include <vector>

#include "ifsdf/mesher.hpp"
#include "ifsdf/vec3.hpp"

namespace ifsdf::mesh {

// ASCII OBJ with v/vn/f records.
void write_obj(const Mesh& mesh, const std::string& path);
Mesh read_obj(const std::string& path);

// Binary little-endian PLY; reader also accepts ASCII and point-only files.
void write_ply(const Mesh& mesh, const std::string& path);
Mesh read_ply(const std::string& path);

// Dispatch on extension (.obj / .ply).
Mesh read_mesh(const std::string& path);
void write_mesh(const Mesh& mesh, const std::string& path);

// Vertex positions from .xyz or .ply files.
std::vector<Vec3> read_point_file(const std::string& path, int dim = 3);

}  // namespace ifsdf::mesh
