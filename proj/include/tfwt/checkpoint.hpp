#pragma once

// Checkpoint file: "TFWTCKPT", a little-endian u64 header length, a JSON
// header (model structure, tensor directory, caller manifest), then the
// float64 parameter payload.

#include <filesystem>

#include "json.hpp"
#include "tfwt/weighting.hpp"

namespace tfwt {

struct Checkpoint {
  WeighterModel model;
  nlohmann::json manifest;  // caller data: configs, seed, split, dataset paths, logs
  /// Named matrices stored after the parameters (e.g. fine-tuned training W).
  std::vector<std::pair<std::string, Matrix>> extras;

  const Matrix* extra(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const WeighterModel& model, const nlohmann::json& manifest,
                     const std::vector<std::pair<std::string, Matrix>>& extras = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tfwt
