#include "lgr/provenance.hpp"

#include "lgr/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>

namespace lgr::provenance {

namespace fs = std::filesystem;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw Error("SHA-256 final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for hashing: " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force)
      throw Error("output directory " + dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

nlohmann::json to_json(const Manifest& m) {
  return {{"tool", m.tool},       {"version", m.version}, {"command", m.command}, {"argv", m.argv},
          {"config", m.config},   {"overrides", m.overrides}, {"seed", m.seed}, {"inputs", m.inputs},
          {"outputs", m.outputs}, {"extra", m.extra}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.tool = j.at("tool").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config");
  m.overrides = j.at("overrides").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

void record_input(Manifest& m, const fs::path& path) {
  if (fs::is_directory(path)) {
    for (const auto& f : files_under(path)) m.inputs[f.string()] = sha256_file(f);
  } else {
    m.inputs[path.string()] = sha256_file(path);
  }
}

void write_manifest(const fs::path& dir, Manifest m) {
  m.outputs.clear();
  for (const auto& f : files_under(dir)) {
    const fs::path rel = fs::relative(f, dir);
    if (rel == kManifestName) continue;
    m.outputs[rel.generic_string()] = sha256_file(f);
  }
  std::ofstream out(dir / kManifestName);
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << to_json(m).dump(2) << "\n";
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw Error("no provenance manifest in " + dir.string());
  return manifest_from_json(nlohmann::json::parse(in));
}

}  // namespace lgr::provenance
