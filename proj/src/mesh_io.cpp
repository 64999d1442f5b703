#include "ifsdf/mesh_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ifsdf/errors.hpp"
#include "ifsdf/geom.hpp"

namespace ifsdf::mesh {

namespace {

std::string lower_ext(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext;
}

int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw InputError("ply: unknown property type '" + t + "'");
}

double ply_read_number(std::ifstream& in, const std::string& type) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), ply_type_size(type));
  if (!in) throw InputError("ply: truncated body");
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, buf, 4);
    return v;
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, buf, 8);
    return v;
  }
  std::int64_t v = 0;
  const int size = ply_type_size(type);
  for (int i = 0; i < size; ++i) v |= static_cast<std::int64_t>(buf[i]) << (8 * i);
  const bool is_signed = type[0] != 'u';
  if (is_signed && size < 8) {
    const std::int64_t sign_bit = 1LL << (8 * size - 1);
    if (v & sign_bit) v -= 1LL << (8 * size);
  }
  return static_cast<double>(v);
}

struct PlyProperty {
  std::string type;        // scalar type, or list index type
  std::string count_type;  // non-empty for list properties
  std::string name;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

}  // namespace

void write_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write mesh: " + path);
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  const bool vn = mesh.has_normals();
  if (vn)
    for (const Vec3& n : mesh.normals) out << "vn " << n.x << ' ' << n.y << ' ' << n.z << '\n';
  for (const auto& t : mesh.triangles) {
    if (vn)
      out << "f " << t[0] + 1 << "//" << t[0] + 1 << ' ' << t[1] + 1 << "//" << t[1] + 1 << ' '
          << t[2] + 1 << "//" << t[2] + 1 << '\n';
    else
      out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw InputError("failed writing mesh: " + path);
}

Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh: " + path);
  Mesh mesh;
  std::vector<Vec3> normals;
  std::vector<int> normal_of_vertex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw InputError(path + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ss >> n.x >> n.y >> n.z))
        throw InputError(path + ":" + std::to_string(lineno) + ": bad normal");
      normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> face, face_n;
      std::string item;
      while (ss >> item) {
        // forms: i, i/t, i//n, i/t/n
        const std::size_t s1 = item.find('/');
        const int vi = std::stoi(item.substr(0, s1));
        if (vi <= 0 || vi > static_cast<int>(mesh.vertices.size()))
          throw InputError(path + ":" + std::to_string(lineno) + ": vertex index out of range");
        face.push_back(vi - 1);
        int ni = -1;
        if (s1 != std::string::npos) {
          const std::size_t s2 = item.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < item.size())
            ni = std::stoi(item.substr(s2 + 1)) - 1;
        }
        face_n.push_back(ni);
      }
      if (face.size() < 3)
        throw InputError(path + ":" + std::to_string(lineno) + ": face needs 3+ vertices");
      for (std::size_t k = 2; k < face.size(); ++k)
        mesh.triangles.push_back({face[0], face[static_cast<int>(k) - 1], face[k]});
      if (normal_of_vertex.size() < mesh.vertices.size())
        normal_of_vertex.resize(mesh.vertices.size(), -1);
      for (std::size_t k = 0; k < face.size(); ++k)
        if (face_n[k] >= 0) normal_of_vertex[face[k]] = face_n[k];
    }
  }
  if (!normals.empty() && normal_of_vertex.size() == mesh.vertices.size()) {
    bool all = true;
    for (int ni : normal_of_vertex) all &= ni >= 0 && ni < static_cast<int>(normals.size());
    if (all) {
      mesh.normals.resize(mesh.vertices.size());
      for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        mesh.normals[i] = normals[normal_of_vertex[i]];
    }
  }
  return mesh;
}

void write_ply(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write mesh: " + path);
  const bool vn = mesh.has_normals();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (vn) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    float buf[6] = {static_cast<float>(mesh.vertices[i].x), static_cast<float>(mesh.vertices[i].y),
                    static_cast<float>(mesh.vertices[i].z), 0.f, 0.f, 0.f};
    if (vn) {
      buf[3] = static_cast<float>(mesh.normals[i].x);
      buf[4] = static_cast<float>(mesh.normals[i].y);
      buf[5] = static_cast<float>(mesh.normals[i].z);
    }
    out.write(reinterpret_cast<const char*>(buf), (vn ? 6 : 3) * sizeof(float));
  }
  for (const auto& t : mesh.triangles) {
    const unsigned char n = 3;
    std::int32_t idx[3] = {t[0], t[1], t[2]};
    out.write(reinterpret_cast<const char*>(&n), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
  if (!out) throw InputError("failed writing mesh: " + path);
}

Mesh read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open mesh: " + path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw InputError(path + ": not a ply file");
  bool binary = false;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "comment" || tag == "obj_info") continue;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian")
        binary = true;
      else if (fmt == "ascii")
        binary = false;
      else
        throw InputError(path + ": unsupported ply format '" + fmt + "'");
    } else if (tag == "element") {
      PlyElement el;
      ss >> el.name >> el.count;
      elements.push_back(el);
    } else if (tag == "property") {
      if (elements.empty()) throw InputError(path + ": property before element");
      PlyProperty p;
      std::string t;
      ss >> t;
      if (t == "list") {
        ss >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ss >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }

  Mesh mesh;
  auto read_scalar_ascii = [&](std::istringstream& ss, const char* what) {
    double v;
    if (!(ss >> v)) throw InputError(path + ": truncated " + what);
    return v;
  };
  for (const PlyElement& el : elements) {
    if (el.name == "vertex") {
      int xi = -1, yi = -1, zi = -1, nxi = -1, nyi = -1, nzi = -1;
      for (std::size_t p = 0; p < el.props.size(); ++p) {
        if (el.props[p].name == "x") xi = static_cast<int>(p);
        if (el.props[p].name == "y") yi = static_cast<int>(p);
        if (el.props[p].name == "z") zi = static_cast<int>(p);
        if (el.props[p].name == "nx") nxi = static_cast<int>(p);
        if (el.props[p].name == "ny") nyi = static_cast<int>(p);
        if (el.props[p].name == "nz") nzi = static_cast<int>(p);
      }
      if (xi < 0 || yi < 0 || zi < 0) throw InputError(path + ": vertex element lacks x/y/z");
      const bool vn = nxi >= 0 && nyi >= 0 && nzi >= 0;
      mesh.vertices.resize(el.count);
      if (vn) mesh.normals.resize(el.count);
      std::vector<double> row(el.props.size());
      for (std::size_t i = 0; i < el.count; ++i) {
        if (binary) {
          for (std::size_t p = 0; p < el.props.size(); ++p) {
            if (!el.props[p].count_type.empty())
              throw InputError(path + ": list property on vertices unsupported");
            row[p] = ply_read_number(in, el.props[p].type);
          }
        } else {
          std::getline(in, line);
          std::istringstream ss(line);
          for (std::size_t p = 0; p < el.props.size(); ++p)
            row[p] = read_scalar_ascii(ss, "vertex");
        }
        mesh.vertices[i] = {row[xi], row[yi], row[zi]};
        if (vn) mesh.normals[i] = {row[nxi], row[nyi], row[nzi]};
      }
    } else if (el.name == "face") {
      for (std::size_t i = 0; i < el.count; ++i) {
        std::vector<int> face;
        if (binary) {
          const PlyProperty& p = el.props.at(0);
          if (p.count_type.empty()) throw InputError(path + ": face property must be a list");
          const int n = static_cast<int>(ply_read_number(in, p.count_type));
          face.resize(n);
          for (int k = 0; k < n; ++k)
            face[k] = static_cast<int>(ply_read_number(in, p.type));
        } else {
          std::getline(in, line);
          std::istringstream ss(line);
          const int n = static_cast<int>(read_scalar_ascii(ss, "face"));
          face.resize(n);
          for (int k = 0; k < n; ++k) face[k] = static_cast<int>(read_scalar_ascii(ss, "face"));
        }
        for (int v : face)
          if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
            throw InputError(path + ": face index out of range");
        for (std::size_t k = 2; k < face.size(); ++k)
          mesh.triangles.push_back({face[0], face[k - 1], face[static_cast<int>(k)]});
      }
    } else {
      // Skip unknown elements (only possible for ascii line-per-entry data).
      if (binary) throw InputError(path + ": unknown binary element '" + el.name + "'");
      for (std::size_t i = 0; i < el.count; ++i) std::getline(in, line);
    }
  }
  return mesh;
}

Mesh read_mesh(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "obj") return read_obj(path);
  if (ext == "ply") return read_ply(path);
  throw InputError("unsupported mesh format (expected .obj or .ply): " + path);
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "obj")
    write_obj(mesh, path);
  else if (ext == "ply")
    write_ply(mesh, path);
  else
    throw InputError("unsupported mesh format (expected .obj or .ply): " + path);
}

std::vector<Vec3> read_point_file(const std::string& path, int dim) {
  const std::string ext = lower_ext(path);
  if (ext == "ply") return read_ply(path).vertices;
  return geom::read_xyz(path, dim);
}

}  // namespace ifsdf::mesh
