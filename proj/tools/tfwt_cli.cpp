#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tfwt/commands.hpp"
#include "tfwt/errors.hpp"

namespace {

struct Overrides {
  std::string config, dataset, schema, synthetic, output;
  std::size_t rows = 0, epochs = 0, rounds = 0, d_model = 0, layers = 0, heads = 0, bins = 0;
  double dropout = 0, lr = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> models, baselines;
  std::vector<CLI::Option*> opts;

  bool given(const std::string& name) const {
    for (auto* o : opts)
      if (o->check_lname(name) && o->count() > 0) return true;
    return false;
  }

  void attach(CLI::App& app) {
    opts.push_back(app.add_option("-c,--config", config, "JSON config file"));
    opts.push_back(app.add_option("--dataset", dataset, "CSV dataset"));
    opts.push_back(app.add_option("--schema", schema, "schema JSON for --dataset"));
    opts.push_back(app.add_option("--synthetic", synthetic, "gated | duplicated | independent"));
    opts.push_back(app.add_option("--rows", rows, "rows of the synthetic dataset"));
    opts.push_back(app.add_option("--seeds", seeds, "run seeds")->delimiter(','));
    opts.push_back(app.add_option("-o,--output", output, "output directory"));
    opts.push_back(app.add_option("--epochs", epochs, "weighter epochs"));
    opts.push_back(app.add_option("--lr", lr, "weighter learning rate"));
    opts.push_back(app.add_option("--d-model", d_model, "token width"));
    opts.push_back(app.add_option("--layers", layers, "encoder and decoder layers"));
    opts.push_back(app.add_option("--heads", heads, "attention heads"));
    opts.push_back(app.add_option("--dropout", dropout, "dropout rate"));
    opts.push_back(app.add_option("--rounds", rounds, "PPO rounds"));
    opts.push_back(app.add_option("--bins", bins, "histogram bins for Rdd"));
    opts.push_back(app.add_option("--models", models, "lr,nb,knn,mlp,rf")->delimiter(','));
    opts.push_back(app.add_option("--baselines", baselines, "usp,lasso,wb")->delimiter(','));
  }

  // flags > config file (or checkpoint manifest) > defaults
  tfwt::ExperimentConfig resolve(std::optional<tfwt::ExperimentConfig> fallback = std::nullopt) const {
    tfwt::ExperimentConfig c;
    if (!config.empty()) {
      c = tfwt::ExperimentConfig::load(config);
    } else if (fallback) {
      c = *fallback;
    }
    if (given("dataset")) {
      c.dataset_path = dataset;
      c.synthetic.clear();
    }
    if (given("schema")) c.schema_path = schema;
    if (given("synthetic")) {
      c.synthetic = synthetic;
      c.dataset_path.clear();
      c.schema_path.clear();
    }
    if (given("rows")) c.synthetic_rows = rows;
    if (given("seeds")) c.seeds = seeds;
    if (given("output")) c.output_dir = output;
    if (given("epochs")) c.train.epochs = epochs;
    if (given("lr")) c.train.lr = lr;
    if (given("d-model")) c.encoder.d_model = d_model;
    if (given("layers")) c.encoder.layers = layers;
    if (given("heads")) c.encoder.heads = heads;
    if (given("dropout")) c.encoder.dropout = dropout;
    if (given("rounds")) c.ppo.rounds = rounds;
    if (given("bins")) c.discretizer.bins = bins;
    if (given("models")) {
      c.models.clear();
      for (const auto& m : models) c.models.push_back(tfwt::model_kind_from_string(m));
    }
    if (given("baselines")) {
      c.baselines.clear();
      for (const auto& b : baselines) c.baselines.push_back(tfwt::baseline_kind_from_string(b));
    }
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature weighting with a transformer weighter and PPO fine-tuning"};
  app.require_subcommand(1);
  Overrides ov;

  auto* train = app.add_subcommand("train", "train the weighter for every seed");
  ov.attach(*train);

  auto* finetune = app.add_subcommand("finetune", "PPO fine-tuning of trained checkpoints");
  std::vector<std::string> ckpts;
  finetune->add_option("--checkpoint", ckpts, "checkpoint files (default: output/ckpt_seed{s}.tfwt)");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate raw, tfwt, tfwt_ft and baselines");
  auto* score = app.add_subcommand("score", "redundancy of the raw or weighted dataset");
  std::string weights, score_out;
  score->add_option("--weights", weights, "weights CSV (default: all ones)");
  score->add_option("--out", score_out, "write the report JSON here as well as stdout");

  Overrides ov_ft, ov_ev, ov_sc;
  ov_ft.attach(*finetune);
  ov_ev.attach(*evaluate);
  ov_sc.attach(*score);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      tfwt::cmd_train(ov.resolve(), std::cout);
    } else if (*finetune) {
      std::vector<std::filesystem::path> paths(ckpts.begin(), ckpts.end());
      std::optional<tfwt::ExperimentConfig> from_ckpt;
      if (ov_ft.config.empty()) {
        tfwt::ExperimentConfig probe = ov_ft.resolve();
        from_ckpt = tfwt::config_from_checkpoint(
            paths.empty() ? tfwt::checkpoint_path(probe, probe.seeds.front(), false) : paths.front());
        if (ov_ft.given("output")) from_ckpt->output_dir = probe.output_dir;
      }
      for (const auto& w : tfwt::cmd_finetune(ov_ft.resolve(from_ckpt), paths, std::cout))
        std::cerr << "warning: " << w << '\n';
    } else if (*evaluate) {
      std::optional<tfwt::ExperimentConfig> from_ckpt;
      if (ov_ev.config.empty()) {
        tfwt::ExperimentConfig probe = ov_ev.resolve();
        from_ckpt = tfwt::config_from_checkpoint(tfwt::checkpoint_path(probe, probe.seeds.front(), false));
        if (ov_ev.given("output")) from_ckpt->output_dir = probe.output_dir;
      }
      const tfwt::ExperimentConfig cfg = ov_ev.resolve(from_ckpt);
      tfwt::cmd_evaluate(cfg, std::cerr);
      std::cout << "wrote metrics.csv, metrics.json, report.md to " << cfg.output_dir << '\n';
    } else if (*score) {
      const tfwt::ExperimentConfig cfg = ov_sc.resolve();
      const auto report = tfwt::cmd_score(cfg, weights.empty() ? std::nullopt : std::optional<std::filesystem::path>(weights));
      const std::string text = report.to_json().dump(2) + "\n";
      std::cout << text;
      if (!score_out.empty()) tfwt::write_atomic(score_out, text);
    }
  } catch (const tfwt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
