#pragma once

#include "lgr/models.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace lgr {

// Binary checkpoint: 8-byte magic "LGRCKPT1", u64 little-endian header
// length, UTF-8 JSON header, then the float64 little-endian payload of every
// tensor listed in header["tensors"] at its recorded byte offset.
//
// Header: {model_kind, spec, seed, train_config_digest, best_val_accuracy,
// metadata, tensors:[{name, shape, offset}]}.
struct Checkpoint {
  models::ModelSpec spec;
  std::uint64_t seed = 0;
  std::string train_config_digest;
  double best_val_accuracy = 0.0;
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, nn::Tensor> tensors;  // parameters and buffers by name

  // Snapshot of a model's parameters and buffers.
  static Checkpoint capture(models::Model& model);
  // Copies tensors into a model built from the same spec; throws on any
  // missing or mis-shaped entry.
  void restore_into(models::Model& model) const;
  std::unique_ptr<models::Model> instantiate() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lgr
