#include "fetrack/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fetrack {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw ParseError(path.string() + ": " + what);
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) fail(path, "cannot open file");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail(path, "cannot open file for writing");
  out.precision(17);
  return out;
}

// ---------------------------------------------------------------------------
// OBJ

struct RawMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // per vertex; empty when absent
  std::vector<Face> faces;
};

int parse_obj_index(const std::string& token, int vertex_count, const std::filesystem::path& path) {
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) fail(path, "bad face index '" + token + "'");
  } catch (const std::logic_error&) {
    fail(path, "bad face index '" + token + "'");
  }
  if (idx > 0) return idx - 1;
  if (idx < 0) return vertex_count + idx;
  fail(path, "face index 0 is invalid in OBJ");
}

RawMesh read_obj(const std::filesystem::path& path) {
  auto in = open_in(path);
  RawMesh raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) fail(path, "bad vertex on line " + std::to_string(lineno));
      raw.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) idx.push_back(parse_obj_index(tok, static_cast<int>(raw.vertices.size()), path));
      if (idx.size() != 3) fail(path, "non-triangle face on line " + std::to_string(lineno));
      raw.faces.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return raw;
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const Vec3& v : mesh.vertices()) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Vec3& n : mesh.normals()) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  for (const Face& f : mesh.faces()) {
    out << "f " << f[0] + 1 << "//" << f[0] + 1 << ' ' << f[1] + 1 << "//" << f[1] + 1 << ' ' << f[2] + 1
        << "//" << f[2] + 1 << '\n';
  }
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyEncoding { Ascii, BinaryLE, BinaryBE };

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

int type_size(const std::string& t, const std::filesystem::path& path) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  fail(path, "unknown PLY property type '" + t + "'");
}

class PlyReader {
 public:
  PlyReader(std::istream& in, PlyEncoding enc, const std::filesystem::path& path)
      : in_(in), enc_(enc), path_(path) {}

  double scalar(const std::string& type) {
    if (enc_ == PlyEncoding::Ascii) {
      double v = 0;
      if (!(in_ >> v)) fail(path_, "truncated ascii PLY body");
      return v;
    }
    const int n = type_size(type, path_);
    unsigned char buf[8];
    if (!in_.read(reinterpret_cast<char*>(buf), n)) fail(path_, "truncated binary PLY body");
    const bool file_le = enc_ == PlyEncoding::BinaryLE;
    if (file_le != (std::endian::native == std::endian::little)) std::reverse(buf, buf + n);
    if (type == "char" || type == "int8") return static_cast<int8_t>(buf[0]);
    if (type == "uchar" || type == "uint8") return buf[0];
    if (type == "short" || type == "int16") return read_as<int16_t>(buf);
    if (type == "ushort" || type == "uint16") return read_as<uint16_t>(buf);
    if (type == "int" || type == "int32") return read_as<int32_t>(buf);
    if (type == "uint" || type == "uint32") return read_as<uint32_t>(buf);
    if (type == "float" || type == "float32") return read_as<float>(buf);
    return read_as<double>(buf);
  }

 private:
  template <typename T>
  static double read_as(const unsigned char* buf) {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return static_cast<double>(v);
  }

  std::istream& in_;
  PlyEncoding enc_;
  const std::filesystem::path& path_;
};

RawMesh read_ply(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") fail(path, "missing 'ply' magic");

  PlyEncoding enc = PlyEncoding::Ascii;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") enc = PlyEncoding::Ascii;
      else if (f == "binary_little_endian") enc = PlyEncoding::BinaryLE;
      else if (f == "binary_big_endian") enc = PlyEncoding::BinaryBE;
      else fail(path, "unsupported PLY format '" + f + "'");
    } else if (tag == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) fail(path, "property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (tag == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) fail(path, "missing end_header");

  RawMesh raw;
  PlyReader reader(in, enc, path);
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      auto find = [&](const char* name) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          if (e.properties[k].name == name) return static_cast<int>(k);
        }
        return -1;
      };
      const int ix = find("x"), iy = find("y"), iz = find("z");
      const int inx = find("nx"), iny = find("ny"), inz = find("nz");
      if (ix < 0 || iy < 0 || iz < 0) fail(path, "vertex element lacks x/y/z");
      const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;
      raw.vertices.resize(e.count);
      if (has_normals) raw.normals.resize(e.count);
      std::vector<double> vals(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const PlyProperty& p = e.properties[k];
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.scalar(p.count_type));
            for (std::size_t j = 0; j < n; ++j) reader.scalar(p.type);
            vals[k] = 0;
          } else {
            vals[k] = reader.scalar(p.type);
          }
        }
        raw.vertices[i] = Vec3(vals[ix], vals[iy], vals[iz]);
        if (has_normals) raw.normals[i] = Vec3(vals[inx], vals[iny], vals[inz]);
      }
    } else if (e.name == "face") {
      raw.faces.reserve(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const PlyProperty& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.scalar(p.count_type));
            std::vector<int> idx(n);
            for (std::size_t j = 0; j < n; ++j) idx[j] = static_cast<int>(reader.scalar(p.type));
            if (p.name == "vertex_indices" || p.name == "vertex_index") {
              if (n != 3) fail(path, "non-triangle face (" + std::to_string(n) + " vertices) at face " +
                                         std::to_string(i));
              raw.faces.push_back({idx[0], idx[1], idx[2]});
            }
          } else {
            reader.scalar(p.type);
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const PlyProperty& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.scalar(p.count_type));
            for (std::size_t j = 0; j < n; ++j) reader.scalar(p.type);
          } else {
            reader.scalar(p.type);
          }
        }
      }
    }
  }
  return raw;
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native != std::endian::little) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
               const std::vector<Face>* faces, bool binary) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << points.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (faces) out << "element face " << faces->size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    const Vec3& n = normals[i];
    if (binary) {
      for (int k = 0; k < 3; ++k) put_le(out, p[k]);
      for (int k = 0; k < 3; ++k) put_le(out, n[k]);
    } else {
      out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    }
  }
  if (faces) {
    for (const Face& f : *faces) {
      if (binary) {
        put_le<uint8_t>(out, 3);
        for (int k = 0; k < 3; ++k) put_le<int32_t>(out, f[k]);
      } else {
        out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
      }
    }
  }
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return MeshFormat::OBJ;
  if (ext == ".ply") return MeshFormat::PLY;
  fail(path, "cannot infer mesh format from extension '" + ext + "'");
}

TriMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format) {
  const MeshFormat fmt = format.value_or(format_from_path(path));
  RawMesh raw = fmt == MeshFormat::OBJ ? read_obj(path) : read_ply(path);
  if (raw.vertices.empty() || raw.faces.empty()) fail(path, "empty mesh");
  try {
    return TriMesh(std::move(raw.vertices), std::move(raw.faces));
  } catch (const GeometryError& e) {
    fail(path, e.what());
  }
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, std::optional<MeshFormat> format,
               bool binary) {
  const MeshFormat fmt = format.value_or(format_from_path(path));
  if (fmt == MeshFormat::OBJ) {
    write_obj(mesh, path);
  } else {
    write_ply(path, mesh.vertices(), mesh.normals(), &mesh.faces(), binary);
  }
}

PointCloudFrame load_cloud(const std::filesystem::path& path) {
  PointCloudFrame cloud;
  if (lower(path.extension().string()) == ".ply") {
    RawMesh raw = read_ply(path);
    if (raw.normals.empty()) fail(path, "point cloud has no normals (nx, ny, nz required)");
    cloud.points = std::move(raw.vertices);
    cloud.normals = std::move(raw.normals);
  } else {
    auto in = open_in(path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::vector<double> vals;
      double v;
      while (ls >> v) vals.push_back(v);
      if (vals.empty()) continue;
      if (vals.size() != 6) {
        fail(path, "expected 6 columns (x y z nx ny nz) on line " + std::to_string(lineno));
      }
      cloud.points.emplace_back(vals[0], vals[1], vals[2]);
      cloud.normals.emplace_back(vals[3], vals[4], vals[5]);
    }
  }
  if (cloud.points.empty()) fail(path, "empty point cloud");
  for (std::size_t i = 0; i < cloud.normals.size(); ++i) {
    const double len = cloud.normals[i].norm();
    if (!(len > 1e-12)) fail(path, "zero-length normal at point " + std::to_string(i));
    cloud.normals[i] /= len;
  }
  return cloud;
}

void save_cloud(const PointCloudFrame& cloud, const std::filesystem::path& path, bool binary) {
  if (lower(path.extension().string()) == ".ply") {
    write_ply(path, cloud.points, cloud.normals, nullptr, binary);
    return;
  }
  auto out = open_out(path);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Vec3& n = cloud.normals[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  }
}

}  // namespace fetrack
