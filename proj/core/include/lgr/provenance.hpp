#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lgr::provenance {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Creates dir, or refuses when it already holds files unless force is set.
// With force, existing contents are left in place and overwritten file by
// file.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

inline constexpr const char* kManifestName = "provenance.json";

// Everything needed to re-run the producing command: the argument vector,
// the resolved configuration (overrides applied), recorded overrides, the
// top-level seed, and digests of inputs and outputs.
struct Manifest {
  std::string tool = "lgr";
  std::string version;
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to the output dir -> sha256
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

// Adds the digest of a file or of every file under a directory.
void record_input(Manifest& m, const std::filesystem::path& path);

// Digests every regular file under dir (except the manifest itself) and
// writes dir/provenance.json.
void write_manifest(const std::filesystem::path& dir, Manifest m);
Manifest read_manifest(const std::filesystem::path& dir);

}  // namespace lgr::provenance
