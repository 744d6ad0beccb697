#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/types.hpp"

namespace sgmlab {

void write_f64_le(std::ostream& out, std::span<const double> values);
std::vector<double> read_f64_le(std::istream& in, std::size_t count);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Sample cloud: m x d row-major float64 at `path`, sidecar `path`.json
/// holding {m, d, seed}.
struct CloudMeta {
  std::size_t m = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
};

void save_cloud(const std::filesystem::path& path, const PointMatrix& points, std::uint64_t seed);
PointMatrix load_cloud(const std::filesystem::path& path, CloudMeta* meta = nullptr);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Formats a double so that it parses back to the same value.
std::string format_double(double v);

/// git blob hash ("blob <len>\0" + contents), hex SHA-1.
std::string git_blob_hash(const std::string& contents);

}  // namespace sgmlab
