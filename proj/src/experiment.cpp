#include "tfwt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tfwt/errors.hpp"
#include "tfwt/synthetic.hpp"

namespace tfwt {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

template <class T>
T field(const nlohmann::json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class F>
auto section(const nlohmann::json& j, const std::string& key, const std::string& where, F parse)
    -> decltype(parse(j)) {
  try {
    return parse(j.contains(key) ? j.at(key) : nlohmann::json::object());
  } catch (const ConfigError& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset_path.empty() && synthetic.empty()) throw ConfigError("config: set either dataset or synthetic");
  if (!dataset_path.empty() && schema_path.empty()) throw ConfigError("config: dataset requires a schema path");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("config: split_fraction must lie in (0, 1)");
  if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  if (models.empty()) throw ConfigError("config: models must be nonempty");
  if (lasso_lambda && !(*lasso_lambda > 0.0)) throw ConfigError("config: lasso_lambda must be positive");
  encoder.validate();
  train.validate();
  ppo.validate();
  discretizer.validate();
}

std::string ExperimentConfig::dataset_label() const {
  if (!dataset_path.empty()) return std::filesystem::path(dataset_path).stem().string();
  return "synthetic-" + synthetic;
}

nlohmann::json ExperimentConfig::to_json() const {
  std::vector<std::string> m, b;
  for (auto k : models) m.push_back(to_string(k));
  for (auto k : baselines) b.push_back(to_string(k));
  nlohmann::json j = {
      {"dataset", dataset_path},
      {"schema", schema_path},
      {"synthetic", synthetic},
      {"synthetic_rows", synthetic_rows},
      {"split_fraction", split_fraction},
      {"seeds", seeds},
      {"encoder", encoder.to_json()},
      {"train", train.to_json()},
      {"ppo", ppo.to_json()},
      {"discretizer", {{"bins", discretizer.bins}, {"max_rows", discretizer.max_rows},
                       {"include_diagonal", discretizer.include_diagonal}}},
      {"surrogate", to_string(surrogate)},
      {"models", m},
      {"baselines", b},
      {"model_options",
       {{"l2", model_options.l2},
        {"knn_k", model_options.knn_k},
        {"forest_trees", model_options.forest_trees},
        {"forest_depth", model_options.forest_depth},
        {"mlp_hidden", model_options.mlp_hidden},
        {"mlp_epochs", model_options.mlp_epochs},
        {"mlp_patience", model_options.mlp_patience},
        {"mlp_lr", model_options.mlp_lr}}},
      {"output_dir", output_dir}};
  j["lasso_lambda"] = lasso_lambda ? nlohmann::json(*lasso_lambda) : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  const std::string w = "config";
  reject_unknown(j,
                 {"dataset", "schema", "synthetic", "synthetic_rows", "split_fraction", "seeds", "encoder", "train",
                  "ppo", "discretizer", "surrogate", "models", "baselines", "lasso_lambda", "model_options",
                  "output_dir"},
                 w);
  ExperimentConfig c;
  c.dataset_path = field(j, "dataset", c.dataset_path, w);
  c.schema_path = field(j, "schema", c.schema_path, w);
  c.synthetic = field(j, "synthetic", c.synthetic, w);
  c.synthetic_rows = field(j, "synthetic_rows", c.synthetic_rows, w);
  c.split_fraction = field(j, "split_fraction", c.split_fraction, w);
  c.seeds = field(j, "seeds", c.seeds, w);
  c.encoder = section(j, "encoder", w, [](const nlohmann::json& s) {
    reject_unknown(s, {"layers", "heads", "d_model", "ff_width", "dropout"}, "encoder");
    return EncoderConfig::from_json(s);
  });
  c.train = section(j, "train", w, [](const nlohmann::json& s) {
    reject_unknown(s, {"epochs", "batch_size", "lr", "patience", "seed", "validation_fraction", "divergence_limit"},
                   "train");
    return TrainConfig::from_json(s);
  });
  c.ppo = section(j, "ppo", w, [](const nlohmann::json& s) {
    reject_unknown(s,
                   {"eps_ratio", "eps_w", "sigma0", "steps", "update_epochs", "rounds", "actor_lr", "critic_lr",
                    "hidden", "literal_reward_sign", "min_relative_improvement", "guard_tolerance", "seed"},
                   "ppo");
    return PPOConfig::from_json(s);
  });
  c.discretizer = section(j, "discretizer", w, [](const nlohmann::json& s) {
    reject_unknown(s, {"bins", "max_rows", "include_diagonal"}, "discretizer");
    Discretizer d;
    d.bins = s.value("bins", d.bins);
    d.max_rows = s.value("max_rows", d.max_rows);
    d.include_diagonal = s.value("include_diagonal", d.include_diagonal);
    d.validate();
    return d;
  });
  c.model_options = section(j, "model_options", w, [](const nlohmann::json& s) {
    reject_unknown(s,
                   {"l2", "knn_k", "forest_trees", "forest_depth", "mlp_hidden", "mlp_epochs", "mlp_patience",
                    "mlp_lr"},
                   "model_options");
    ModelOptions o;
    o.l2 = s.value("l2", o.l2);
    o.knn_k = s.value("knn_k", o.knn_k);
    o.forest_trees = s.value("forest_trees", o.forest_trees);
    o.forest_depth = s.value("forest_depth", o.forest_depth);
    o.mlp_hidden = s.value("mlp_hidden", o.mlp_hidden);
    o.mlp_epochs = s.value("mlp_epochs", o.mlp_epochs);
    o.mlp_patience = s.value("mlp_patience", o.mlp_patience);
    o.mlp_lr = s.value("mlp_lr", o.mlp_lr);
    return o;
  });
  c.surrogate = model_kind_from_string(field<std::string>(j, "surrogate", to_string(c.surrogate), w));
  if (j.contains("models")) {
    c.models.clear();
    for (const auto& s : field<std::vector<std::string>>(j, "models", {}, w)) c.models.push_back(model_kind_from_string(s));
  }
  if (j.contains("baselines")) {
    c.baselines.clear();
    for (const auto& s : field<std::vector<std::string>>(j, "baselines", {}, w))
      c.baselines.push_back(baseline_kind_from_string(s));
  }
  if (j.contains("lasso_lambda") && !j.at("lasso_lambda").is_null()) c.lasso_lambda = field(j, "lasso_lambda", 0.0, w);
  c.output_dir = field(j, "output_dir", c.output_dir, w);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) {
    if (!std::filesystem::exists(cfg.schema_path)) throw SchemaError("schema file not found: " + cfg.schema_path);
    if (!std::filesystem::exists(cfg.dataset_path)) throw DataError("dataset file not found: " + cfg.dataset_path);
    return load_csv(cfg.dataset_path, Schema::load(cfg.schema_path));
  }
  // Synthetic data is drawn once per experiment; seeds vary the split and models.
  return synthetic::by_name(cfg.synthetic, cfg.synthetic_rows, 0);
}

SeedContext prepare_seed(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  SeedContext ctx;
  ctx.split = split(ds, cfg.split_fraction, seed);
  std::vector<std::size_t> all(ctx.split.train.n);
  std::iota(all.begin(), all.end(), 0);
  std::tie(ctx.fit_rows, ctx.val_rows) = stratified_holdout(ctx.split.train, all, cfg.train.validation_fraction, seed);
  const FeatureStats stats = compute_stats(ctx.split.train);
  ModelOptions opt = cfg.model_options;
  opt.seed = seed;
  ctx.surrogate = pretrain_downstream(ctx.split.train.subset(ctx.fit_rows), stats, cfg.surrogate, opt);
  return ctx;
}

SeedTraining train_seed(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed) {
  SeedTraining out;
  out.model = WeighterModel::create(ctx.split.train, cfg.encoder, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  out.result = train(out.model, ctx.split.train, *ctx.surrogate, ctx.fit_rows, ctx.val_rows, tc);
  return out;
}

SeedTraining train_seed(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed) {
  return train_seed(cfg, prepare_seed(cfg, ds, seed), seed);
}

SeedFinetune finetune_seed(const ExperimentConfig& cfg, const SeedContext& ctx, WeighterModel& model,
                           std::uint64_t seed) {
  const Dataset& train = ctx.split.train;
  model.check_schema(train);
  const Matrix w0 = model.weights(train);
  RedundancyEnv env;
  env.base = weighted_cells(train, model.stats, Matrix::Ones(static_cast<Eigen::Index>(train.n),
                                                             static_cast<Eigen::Index>(train.k)));
  env.discrete = discrete_flags(train);
  env.disc = cfg.discretizer;
  env.disc.seed = seed;

  const Dataset val = train.subset(ctx.val_rows);
  const Matrix val_view = numeric_view(val, model.stats);
  const NumericLayout layout = numeric_layout(val);
  const DownstreamModel& surrogate = *ctx.surrogate;
  ValidationGuard guard = [&](const Matrix& w) {
    Matrix wv(static_cast<Eigen::Index>(ctx.val_rows.size()), w.cols());
    for (std::size_t i = 0; i < ctx.val_rows.size(); ++i)
      wv.row(static_cast<Eigen::Index>(i)) = w.row(static_cast<Eigen::Index>(ctx.val_rows[i]));
    return evaluate(surrogate, apply_weights(wv, val_view, layout), val.labels).accuracy;
  };

  PPOConfig pc = cfg.ppo;
  pc.seed = seed;
  SeedFinetune out;
  out.result = finetune(w0, env, pc, ctx.val_rows.empty() ? ValidationGuard{} : guard);
  out.train_weights = out.result.w;
  if (model.column_offset.empty()) model.column_offset.assign(train.k, 0.0);
  for (std::size_t c = 0; c < train.k; ++c) model.column_offset[c] += out.result.column_offset[c];
  return out;
}

std::vector<MethodData> method_features(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed,
                                        const WeighterModel* tfwt, const WeighterModel* tfwt_ft,
                                        const Matrix* ft_train_weights, std::vector<std::string>* notes) {
  const Dataset& train = ctx.split.train;
  const Dataset& test = ctx.split.test;
  const FeatureStats stats = compute_stats(train);
  const NumericLayout layout = numeric_layout(train);
  std::vector<MethodData> out;
  const Matrix raw_train = numeric_view(train, stats), raw_test = numeric_view(test, stats);
  out.push_back({"raw", raw_train, train.labels, raw_test});
  if (tfwt) {
    auto tr = transform(*tfwt, train), te = transform(*tfwt, test);
    out.push_back({"tfwt", std::move(tr.features), train.labels, std::move(te.features)});
  }
  if (tfwt_ft) {
    Matrix train_x = ft_train_weights ? apply_weights(*ft_train_weights, raw_train, layout)
                                      : transform(*tfwt_ft, train).features;
    out.push_back({"tfwt_ft", std::move(train_x), train.labels, transform(*tfwt_ft, test).features});
  }
  for (auto b : cfg.baselines) {
    switch (b) {
      case BaselineKind::usp: {
        std::string note;
        Dataset u = undersample(train, seed, &note);
        if (!note.empty() && notes) notes->push_back("seed " + std::to_string(seed) + ": " + note);
        out.push_back({"usp", numeric_view(u, stats), u.labels, raw_test});
        break;
      }
      case BaselineKind::wb: {
        Dataset u = weighted_bootstrap(train, seed);
        out.push_back({"wb", numeric_view(u, stats), u.labels, raw_test});
        break;
      }
      case BaselineKind::lasso: {
        const double lambda =
            cfg.lasso_lambda ? *cfg.lasso_lambda : lasso_cv_lambda(raw_train, train.labels, train.num_classes(), seed);
        try {
          const auto sel = lasso_select(raw_train, train.labels, train.num_classes(), lambda);
          out.push_back({"lasso", select_columns(raw_train, sel), train.labels, select_columns(raw_test, sel)});
        } catch (const EmptySelectionError& e) {
          if (notes) notes->push_back("seed " + std::to_string(seed) + ": lasso skipped: " + e.what());
        }
        break;
      }
    }
  }
  return out;
}

std::vector<RunRecord> evaluate_seed(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed,
                                     const std::vector<MethodData>& methods) {
  std::vector<RunRecord> out;
  ModelOptions opt = cfg.model_options;
  opt.seed = seed;
  const std::size_t C = ctx.split.train.num_classes();
  for (auto kind : cfg.models) {
    for (const auto& m : methods) {
      auto model = fit(kind, m.train_x, m.train_y, C, opt);
      out.push_back({cfg.dataset_label(), to_string(kind), m.method, seed, evaluate(*model, m.test_x, ctx.split.test.labels)});
    }
  }
  return out;
}

std::string metrics_csv(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << "dataset,model,method,seed,metric,value\n";
  for (const auto& r : runs) {
    const std::pair<const char*, double> vals[] = {{"accuracy", r.metrics.accuracy},
                                                   {"precision", r.metrics.precision},
                                                   {"recall", r.metrics.recall},
                                                   {"f1", r.metrics.f1}};
    for (const auto& [name, v] : vals)
      os << r.dataset << ',' << r.model << ',' << r.method << ',' << r.seed << ',' << name << ',' << fmt(v) << '\n';
  }
  return os.str();
}

namespace {

using GroupKey = std::pair<std::string, std::string>;  // model, method

std::map<GroupKey, std::vector<Metrics>> group(const std::vector<RunRecord>& runs) {
  std::map<GroupKey, std::vector<Metrics>> g;
  for (const auto& r : runs) g[{r.model, r.method}].push_back(r.metrics);
  return g;
}

MetricsAggregate aggregate(const std::vector<Metrics>& v) {
  if (v.size() >= 2) return compare(v);
  MetricsAggregate a;
  a.accuracy = {v[0].accuracy, 0.0, {v[0].accuracy}};
  a.precision = {v[0].precision, 0.0, {v[0].precision}};
  a.recall = {v[0].recall, 0.0, {v[0].recall}};
  a.f1 = {v[0].f1, 0.0, {v[0].f1}};
  return a;
}

std::vector<std::string> ordered(const std::vector<RunRecord>& runs, bool methods) {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    const auto& s = methods ? r.method : r.model;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

}  // namespace

nlohmann::json metrics_json(const std::vector<RunRecord>& runs) {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json e = r.metrics.to_json();
    e["dataset"] = r.dataset;
    e["model"] = r.model;
    e["method"] = r.method;
    e["seed"] = r.seed;
    j["runs"].push_back(e);
  }
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [key, v] : group(runs)) agg[key.first][key.second] = aggregate(v).to_json();
  j["aggregate"] = agg;
  return j;
}

std::string report_markdown(const std::vector<RunRecord>& runs, const std::string& title) {
  std::ostringstream os;
  os << "# " << title << "\n\n";
  if (runs.empty()) return os.str() + "No runs.\n";
  const auto g = group(runs);
  const auto models = ordered(runs, false), methods = ordered(runs, true);
  std::set<std::uint64_t> seeds;
  for (const auto& r : runs) seeds.insert(r.seed);
  os << "Dataset `" << runs.front().dataset << "`, " << seeds.size() << " seed(s). Cells are mean ± population std.\n";
  const std::pair<const char*, MetricSummary MetricsAggregate::*> metrics[] = {
      {"Accuracy", &MetricsAggregate::accuracy},
      {"Precision", &MetricsAggregate::precision},
      {"Recall", &MetricsAggregate::recall},
      {"F1", &MetricsAggregate::f1}};
  for (const auto& [name, member] : metrics) {
    os << "\n## " << name << "\n\n| model |";
    for (const auto& m : methods) os << ' ' << m << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& model : models) {
      os << "| " << model << " |";
      for (const auto& method : methods) {
        auto it = g.find({model, method});
        if (it == g.end()) {
          os << " - |";
          continue;
        }
        const MetricSummary s = aggregate(it->second).*member;
        char buf[64];
        std::snprintf(buf, sizeof buf, " %.4f ± %.4f |", s.mean, s.stddev);
        os << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + tmp.string());
    os << text;
    if (!os) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string weights_csv(const Matrix& w, const std::vector<std::string>& names) {
  if (names.size() != static_cast<std::size_t>(w.cols())) throw DimensionError("weights_csv: header/width mismatch");
  std::ostringstream os;
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) os << (c ? "," : "") << fmt(w(r, c));
    os << '\n';
  }
  return os.str();
}

Matrix parse_weights_csv(const std::string& text, std::size_t expected_cols) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DataError("weights: empty file");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("weights: line " + std::to_string(lineno) + ": '" + cell + "' is not a number");
      }
    }
    if (row.size() != expected_cols) {
      throw DimensionError("weights: line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                           " values, dataset has " + std::to_string(expected_cols) + " features");
    }
    rows.push_back(std::move(row));
  }
  Matrix w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(expected_cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < expected_cols; ++c) w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return w;
}

}  // namespace tfwt
