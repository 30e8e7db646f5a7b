#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fetrack/mesh.hpp"

namespace fetrack {

enum class MeshFormat { OBJ, PLY };

/// Thrown on unreadable or malformed files. The message names the path.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Guesses the format from the file extension (.obj / .ply, case-insensitive).
MeshFormat format_from_path(const std::filesystem::path& path);

/// Loads an indexed triangle mesh. Vertex order is kept exactly as in the
/// file; normals are recomputed from the faces.
TriMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt);

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path,
               std::optional<MeshFormat> format = std::nullopt, bool binary = false);

/// Loads a point cloud with normals from PLY (x,y,z,nx,ny,nz) or from
/// whitespace-delimited text with six columns. Normals are renormalized;
/// a cloud without normals is rejected.
PointCloudFrame load_cloud(const std::filesystem::path& path);

/// Writes PLY for a .ply path, six-column text otherwise.
void save_cloud(const PointCloudFrame& cloud, const std::filesystem::path& path, bool binary = false);

}  // namespace fetrack
