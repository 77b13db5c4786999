#include "tfwt/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "tfwt/checkpoint.hpp"
#include "tfwt/errors.hpp"

namespace tfwt {

namespace {

void ensure_output_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec || !std::filesystem::is_directory(cfg.output_dir)) {
    throw ConfigError("output_dir: cannot create " + cfg.output_dir);
  }
  const auto probe = std::filesystem::path(cfg.output_dir) / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw ConfigError("output_dir: " + cfg.output_dir + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed, bool finetuned) {
  return std::filesystem::path(cfg.output_dir) /
         ("ckpt_seed" + std::to_string(seed) + (finetuned ? "_ft" : "") + ".tfwt");
}

ExperimentConfig config_from_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.manifest.contains("config")) throw DataError("checkpoint " + path.string() + " has no config in its manifest");
  return ExperimentConfig::from_json(ck.manifest.at("config"));
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  ensure_output_dir(cfg);
  const Dataset ds = load_dataset(cfg);
  const std::filesystem::path out(cfg.output_dir);
  bool first = true;
  for (auto seed : cfg.seeds) {
    const SeedContext ctx = prepare_seed(cfg, ds, seed);
    SeedTraining st = train_seed(cfg, ctx, seed);
    std::string lines;
    nlohmann::json log_json = nlohmann::json::array();
    for (const auto& e : st.result.log) {
      lines += e.to_json().dump() + "\n";
      log_json.push_back(e.to_json());
    }
    const nlohmann::json manifest = {{"config", cfg.to_json()},
                                     {"seed", seed},
                                     {"dataset", cfg.dataset_label()},
                                     {"best_epoch", st.result.best_epoch},
                                     {"log", log_json}};
    save_checkpoint(checkpoint_path(cfg, seed, false), st.model, manifest);
    write_atomic(out / ("train_log_seed" + std::to_string(seed) + ".jsonl"), lines);
    const std::string w = weights_csv(st.model.weights(ds), ds.feature_names());
    write_atomic(out / ("weights_seed" + std::to_string(seed) + ".csv"), w);
    if (first) write_atomic(out / "weights.csv", w);
    first = false;
    const auto& best = st.result.log.at(st.result.best_epoch);
    log << "seed " << seed << ": best epoch " << st.result.best_epoch << " of " << st.result.log.size() - 1
        << ", val loss " << best.val_loss << ", val accuracy " << best.val_accuracy << '\n';
  }
}

std::vector<std::string> cmd_finetune(const ExperimentConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                                      std::ostream& log) {
  cfg.validate();
  ensure_output_dir(cfg);
  std::vector<std::filesystem::path> paths = checkpoints;
  if (paths.empty())
    for (auto seed : cfg.seeds) paths.push_back(checkpoint_path(cfg, seed, false));
  for (const auto& p : paths)
    if (!std::filesystem::exists(p)) throw DataError("checkpoint not found: " + p.string());

  const Dataset ds = load_dataset(cfg);
  std::string diag;
  std::vector<std::string> warnings;
  for (const auto& p : paths) {
    Checkpoint ck = load_checkpoint(p);
    const auto seed = ck.manifest.value("seed", std::uint64_t{0});
    const SeedContext ctx = prepare_seed(cfg, ds, seed);
    const SeedFinetune ft = finetune_seed(cfg, ctx, ck.model, seed);
    for (const auto& r : ft.result.rounds) {
      nlohmann::json j = r.to_json();
      j["seed"] = seed;
      diag += j.dump() + "\n";
    }
    for (const auto& w : ft.result.warnings) warnings.push_back("seed " + std::to_string(seed) + ": " + w);
    nlohmann::json manifest = ck.manifest;
    manifest["config"] = cfg.to_json();
    manifest["finetune"] = {{"rdd_initial", ft.result.rdd_initial},
                            {"rdd_final", ft.result.rdd_final},
                            {"accepted_rounds", ft.result.accepted_rounds},
                            {"rounds", ft.result.rounds.size()}};
    save_checkpoint(checkpoint_path(cfg, seed, true), ck.model, manifest, {{"train_weights", ft.train_weights}});
    log << "seed " << seed << ": Rdd " << ft.result.rdd_initial << " -> " << ft.result.rdd_final << ", accepted "
        << ft.result.accepted_rounds << " of " << ft.result.rounds.size() << " rounds\n";
  }
  write_atomic(std::filesystem::path(cfg.output_dir) / "ppo_diag.jsonl", diag);
  return warnings;
}

std::vector<RunRecord> cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  ensure_output_dir(cfg);
  for (auto seed : cfg.seeds) {
    const auto p = checkpoint_path(cfg, seed, false);
    if (!std::filesystem::exists(p)) throw DataError("missing checkpoint: " + p.string());
  }
  const Dataset ds = load_dataset(cfg);
  std::vector<RunRecord> runs;
  for (auto seed : cfg.seeds) {
    const Checkpoint base = load_checkpoint(checkpoint_path(cfg, seed, false));
    const auto ft_path = checkpoint_path(cfg, seed, true);
    std::optional<Checkpoint> ft;
    if (std::filesystem::exists(ft_path)) {
      ft = load_checkpoint(ft_path);
    } else {
      log << "seed " << seed << ": no " << ft_path.string() << ", skipping tfwt_ft\n";
    }
    const SeedContext ctx = prepare_seed(cfg, ds, seed);
    std::vector<std::string> notes;
    const auto methods = method_features(cfg, ctx, seed, &base.model, ft ? &ft->model : nullptr,
                                         ft ? ft->extra("train_weights") : nullptr, &notes);
    for (const auto& n : notes) log << n << '\n';
    auto r = evaluate_seed(cfg, ctx, seed, methods);
    runs.insert(runs.end(), r.begin(), r.end());
    log << "seed " << seed << ": evaluated " << methods.size() << " methods x " << cfg.models.size() << " models\n";
  }
  const std::filesystem::path out(cfg.output_dir);
  write_atomic(out / "metrics.csv", metrics_csv(runs));
  write_atomic(out / "metrics.json", metrics_json(runs).dump(2) + "\n");
  write_atomic(out / "report.md", report_markdown(runs, cfg.dataset_label()));
  return runs;
}

RddReport cmd_score(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& weights) {
  const Dataset ds = load_dataset(cfg);
  const FeatureStats stats = compute_stats(ds);
  Matrix w = Matrix::Ones(static_cast<Eigen::Index>(ds.n), static_cast<Eigen::Index>(ds.k));
  if (weights) {
    w = parse_weights_csv(read_file(*weights), ds.k);
    if (static_cast<std::size_t>(w.rows()) != ds.n) {
      throw DimensionError("weights: " + weights->string() + " has " + std::to_string(w.rows()) +
                           " rows, dataset has " + std::to_string(ds.n));
    }
  }
  return rdd(weighted_cells(ds, stats, w), cfg.discretizer, discrete_flags(ds));
}

}  // namespace tfwt
