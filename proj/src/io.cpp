#include "sgmlab/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace sgmlab {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_f64_le(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw std::runtime_error("write failed");
}

std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) throw InvalidArgument("binary body is truncated");
  return values;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("malformed json in " + path.string() + ": " + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void save_cloud(const std::filesystem::path& path, const PointMatrix& points, std::uint64_t seed) {
  std::ostringstream body;
  write_f64_le(body, std::span<const double>(points.data(), static_cast<std::size_t>(points.size())));
  write_file_atomic(path, body.str());
  write_json(sidecar_path(path), {{"m", points.rows()}, {"d", points.cols()}, {"seed", seed}});
}

PointMatrix load_cloud(const std::filesystem::path& path, CloudMeta* meta) {
  const auto side = read_json(sidecar_path(path));
  CloudMeta m{side.at("m").get<std::size_t>(), side.at("d").get<std::size_t>(), side.value("seed", std::uint64_t{0})};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  const auto values = read_f64_le(in, m.m * m.d);
  if (in.peek() != std::char_traits<char>::eof()) throw InvalidArgument("cloud body longer than sidecar says");
  PointMatrix points = Eigen::Map<const PointMatrix>(values.data(), static_cast<Eigen::Index>(m.m), static_cast<Eigen::Index>(m.d));
  if (meta) *meta = m;
  return points;
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string git_blob_hash(const std::string& contents) {
  const std::string header = "blob " + std::to_string(contents.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, contents.data(), contents.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace sgmlab
