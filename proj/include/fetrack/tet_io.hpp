#pragma once

#include <filesystem>

#include "fetrack/fem.hpp"

namespace fetrack {

/// Reads a TetGen-style .node/.ele pair. Index base (0 or 1) is taken from
/// the first node index in the .node file. '#' starts a comment.
TetMesh load_tet_mesh(const std::filesystem::path& node_path, const std::filesystem::path& ele_path);

/// Loads `<stem>.node` and `<stem>.ele`.
TetMesh load_tet_mesh(const std::filesystem::path& stem);

/// Writes `<stem>.node` and `<stem>.ele` with 1-based indices.
void save_tet_mesh(const TetMesh& tet, const std::filesystem::path& stem);

}  // namespace fetrack
