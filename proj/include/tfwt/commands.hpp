#pragma once

// train / finetune / evaluate / score. Each command reads and writes files in
// cfg.output_dir; progress lines go to `log`.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tfwt/experiment.hpp"

namespace tfwt {

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed, bool finetuned);

/// Config stored in a checkpoint manifest.
ExperimentConfig config_from_checkpoint(const std::filesystem::path& path);

/// Writes ckpt_seed{s}.tfwt, train_log_seed{s}.jsonl, weights_seed{s}.csv per
/// seed (W over the whole dataset) and weights.csv for the first seed.
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);

/// Reads ckpt_seed{s}.tfwt (or the given paths), writes ckpt_seed{s}_ft.tfwt
/// and ppo_diag.jsonl. Returns the warnings raised by the runs.
std::vector<std::string> cmd_finetune(const ExperimentConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                                      std::ostream& log);

/// Requires ckpt_seed{s}.tfwt for every seed; tfwt_ft is included when
/// ckpt_seed{s}_ft.tfwt exists. Writes metrics.csv, metrics.json, report.md.
std::vector<RunRecord> cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log);

RddReport cmd_score(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& weights);

}  // namespace tfwt
