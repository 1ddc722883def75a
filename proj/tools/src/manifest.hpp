#pragma once

// Run manifest: resolved config, its hash, seeds and content checksums of
// every input and output file. The only place a timestamp is written.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace disentangle::cli {

/// Hex SHA-1 of `content`.
std::string sha1_hex(std::string_view content);
/// Hex SHA-1 of "blob <size>\0<content>", as `git hash-object` computes it.
std::string git_blob_sha1(std::string_view content);
std::string file_git_sha1(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::string config_json;  // resolved configuration
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

/// Writes <dir>/manifest.json.
void write_manifest(const std::filesystem::path& dir, const Manifest& m);

}  // namespace disentangle::cli
