#include "manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/sha.h>

#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace {

std::string hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(digits[bytes[i] >> 4]);
    out.push_back(digits[bytes[i] & 0xf]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json file_entries(const std::vector<std::filesystem::path>& paths) {
  auto arr = nlohmann::json::array();
  for (const auto& p : paths)
    arr.push_back({{"path", p.generic_string()},
                   {"bytes", std::filesystem::file_size(p)},
                   {"git_sha1", file_git_sha1(p)}});
  return arr;
}

}  // namespace

std::string sha1_hex(std::string_view content) {
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(content.data()), content.size(), digest.data());
  return hex(digest.data(), digest.size());
}

std::string git_blob_sha1(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

std::string file_git_sha1(const std::filesystem::path& path) { return git_blob_sha1(read_file(path)); }

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json j{
      {"tool", "disentangle"},
      {"version", "0.1.0"},
      {"command", m.command},
      {"created_utc", utc_now()},
      {"seed", m.seed},
      {"config_sha1", sha1_hex(m.config_json)},
      {"config", nlohmann::json::parse(m.config_json)},
      {"inputs", file_entries(m.inputs)},
      {"outputs", file_entries(m.outputs)},
  };
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace disentangle::cli
