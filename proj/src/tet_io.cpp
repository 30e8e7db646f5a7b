#include "fetrack/tet_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fetrack/log.hpp"
#include "fetrack/mesh_io.hpp"

namespace fetrack {

namespace {

// Non-empty, comment-stripped lines.
std::vector<std::string> data_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(line);
  }
  return out;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  p += ext;
  return p;
}

}  // namespace

TetMesh load_tet_mesh(const std::filesystem::path& node_path, const std::filesystem::path& ele_path) {
  const auto nl = data_lines(node_path);
  if (nl.empty()) throw ParseError(node_path.string() + ": empty file");
  long count = 0, dim = 0;
  {
    std::istringstream h(nl[0]);
    if (!(h >> count >> dim) || dim != 3 || count <= 0) throw ParseError(node_path.string() + ": bad header");
  }
  if (static_cast<long>(nl.size()) < count + 1) throw ParseError(node_path.string() + ": truncated");
  std::vector<Vec3> nodes(static_cast<std::size_t>(count));
  long base = 0;
  for (long k = 0; k < count; ++k) {
    std::istringstream s(nl[k + 1]);
    long idx = 0;
    Vec3 p;
    if (!(s >> idx >> p.x() >> p.y() >> p.z())) {
      throw ParseError(node_path.string() + ": malformed node line " + std::to_string(k + 1));
    }
    if (k == 0) base = idx;
    if (base != 0 && base != 1) throw ParseError(node_path.string() + ": first index must be 0 or 1");
    if (idx - base != k) throw ParseError(node_path.string() + ": node indices are not consecutive");
    nodes[static_cast<std::size_t>(k)] = p;
  }

  const auto el = data_lines(ele_path);
  if (el.empty()) throw ParseError(ele_path.string() + ": empty file");
  long ntet = 0, per = 0;
  {
    std::istringstream h(el[0]);
    if (!(h >> ntet >> per) || per != 4 || ntet <= 0) {
      throw ParseError(ele_path.string() + ": bad header (only 4-node tets are supported)");
    }
  }
  if (static_cast<long>(el.size()) < ntet + 1) throw ParseError(ele_path.string() + ": truncated");
  std::vector<Tet> tets(static_cast<std::size_t>(ntet));
  for (long k = 0; k < ntet; ++k) {
    std::istringstream s(el[k + 1]);
    long idx = 0;
    long v[4];
    if (!(s >> idx >> v[0] >> v[1] >> v[2] >> v[3])) {
      throw ParseError(ele_path.string() + ": malformed tet line " + std::to_string(k + 1));
    }
    for (int c = 0; c < 4; ++c) {
      const long local = v[c] - base;
      if (local < 0 || local >= count) throw ParseError(ele_path.string() + ": node index out of range");
      tets[static_cast<std::size_t>(k)][c] = static_cast<int>(local);
    }
  }
  TetMesh tet = TetMesh::build(std::move(nodes), std::move(tets));
  const int bad = tet.radius_edge_violations(2.0);
  if (bad > 0) log_warn(ele_path.string() + ": " + std::to_string(bad) + " tets exceed radius-edge ratio 2");
  return tet;
}

TetMesh load_tet_mesh(const std::filesystem::path& stem) {
  return load_tet_mesh(with_ext(stem, ".node"), with_ext(stem, ".ele"));
}

void save_tet_mesh(const TetMesh& tet, const std::filesystem::path& stem) {
  {
    const auto path = with_ext(stem, ".node");
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path.string());
    out << tet.nodes.size() << " 3 0 0\n" << std::setprecision(17);
    for (std::size_t i = 0; i < tet.nodes.size(); ++i) {
      out << i + 1 << ' ' << tet.nodes[i].x() << ' ' << tet.nodes[i].y() << ' ' << tet.nodes[i].z() << '\n';
    }
  }
  const auto path = with_ext(stem, ".ele");
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << tet.tets.size() << " 4 0\n";
  for (std::size_t k = 0; k < tet.tets.size(); ++k) {
    const Tet& t = tet.tets[k];
    out << k + 1 << ' ' << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' ' << t[3] + 1 << '\n';
  }
}

}  // namespace fetrack
