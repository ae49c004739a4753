#include "lgr/checkpoint.hpp"

#include "lgr/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lgr {
namespace {

constexpr char kMagic[8] = {'L', 'G', 'R', 'C', 'K', 'P', 'T', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

Checkpoint Checkpoint::capture(models::Model& model) {
  Checkpoint c;
  c.spec = model.spec();
  c.seed = model.seed();
  for (auto* p : model.parameters()) c.tensors.emplace(p->name, p->value);
  for (auto* b : model.buffers()) c.tensors.emplace(b->name, b->value);
  return c;
}

void Checkpoint::restore_into(models::Model& model) const {
  if (!(model.spec() == spec))
    throw Error(std::string("checkpoint spec does not match model (checkpoint kind ") + models::to_string(spec.kind) +
                ", model kind " + models::to_string(model.spec().kind) + ")");
  auto copy = [&](const std::string& name, nn::Tensor& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint is missing tensor " + name);
    if (it->second.shape() != dst.shape())
      throw Error("checkpoint tensor " + name + " has shape " + nn::shape_string(it->second.shape()) +
                  ", expected " + nn::shape_string(dst.shape()));
    dst = it->second;
  };
  for (auto* p : model.parameters()) copy(p->name, p->value);
  for (auto* b : model.buffers()) copy(b->name, b->value);
}

std::unique_ptr<models::Model> Checkpoint::instantiate() const {
  auto model = models::build_model(spec, seed);
  restore_into(*model);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header{{"model_kind", models::to_string(ckpt.spec.kind)},
                        {"spec", ckpt.spec},
                        {"seed", ckpt.seed},
                        {"train_config_digest", ckpt.train_config_digest},
                        {"best_val_accuracy", ckpt.best_val_accuracy},
                        {"metadata", ckpt.metadata}};
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(double);
  }
  header["tensors"] = entries;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors)
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a checkpoint file: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  auto header = nlohmann::json::parse(text, nullptr, false);
  if (!in || header.is_discarded()) throw Error("corrupt checkpoint header: " + path.string());

  Checkpoint c;
  c.spec = header.at("spec").get<models::ModelSpec>();
  c.seed = header.at("seed").get<std::uint64_t>();
  c.train_config_digest = header.value("train_config_digest", "");
  c.best_val_accuracy = header.value("best_val_accuracy", 0.0);
  c.metadata = header.value("metadata", nlohmann::json::object());
  const std::streamoff payload = in.tellg();
  for (const auto& e : header.at("tensors")) {
    nn::Tensor t(e.at("shape").get<nn::Shape>());
    in.seekg(payload + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw Error("truncated checkpoint: " + path.string());
    c.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

}  // namespace lgr
