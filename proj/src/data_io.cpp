#include "tfwt/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tfwt/errors.hpp"
#include "tfwt/rng.hpp"

namespace tfwt {

std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::discrete:
      return "discrete";
    case ColumnKind::continuous:
      return "continuous";
    case ColumnKind::label:
      return "label";
  }
  return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "discrete") return ColumnKind::discrete;
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "label") return ColumnKind::label;
  throw SchemaError("unknown column kind '" + s + "' (expected discrete|continuous|label)");
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::set<std::string> seen;
  std::size_t labels = 0;
  std::vector<std::string> cont;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw SchemaError("schema: empty column name");
    if (!seen.insert(c.name).second) throw SchemaError("schema: duplicate column '" + c.name + "'");
    switch (c.kind) {
      case ColumnKind::label:
        ++labels;
        label_ = c.name;
        break;
      case ColumnKind::discrete:
        features_.push_back(c.name);
        break;
      case ColumnKind::continuous:
        cont.push_back(c.name);
        break;
    }
  }
  if (labels != 1) {
    throw SchemaError("schema: expected exactly one label column, found " + std::to_string(labels));
  }
  discrete_ = features_.size();
  features_.insert(features_.end(), cont.begin(), cont.end());
  if (features_.empty()) throw SchemaError("schema: no feature columns");
}

Schema Schema::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("schema: expected a JSON list of {name, kind}");
  std::vector<ColumnSpec> cols;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("name") || !e.contains("kind")) {
      throw SchemaError("schema: entry missing 'name' or 'kind': " + e.dump());
    }
    cols.push_back({e.at("name").get<std::string>(),
                    column_kind_from_string(e.at("kind").get<std::string>())});
  }
  return Schema(std::move(cols));
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Schema::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : columns_) j.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  return j;
}

std::string Schema::fingerprint() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    h ^= 0xFF;
    h *= 0x100000001B3ULL;
  };
  for (std::size_t i = 0; i < features_.size(); ++i) {
    feed(features_[i]);
    feed(i < discrete_ ? "d" : "c");
  }
  feed(label_);
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.schema = schema;
  out.k = k;
  out.m = m;
  out.categories = categories;
  out.class_names = class_names;
  out.n = rows.size();
  out.features.resize(out.n * k);
  out.labels.resize(out.n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw DimensionError("subset: row " + std::to_string(rows[i]) + " >= " + std::to_string(n));
    std::copy_n(features.begin() + rows[i] * k, k, out.features.begin() + i * k);
    out.labels[i] = labels[rows[i]];
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes(), 0);
  for (int y : labels) ++c[static_cast<std::size_t>(y)];
  return c;
}

namespace {

std::vector<std::vector<std::string>> parse_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_started = false, any = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) records.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // CRLF line ending; lone CR treated the same.
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++line;
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field near line " + std::to_string(line));
  if (any && (!field.empty() || !row.empty())) end_row();
  return records;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

}  // namespace

Dataset parse_csv(const std::string& text, const Schema& schema, const LoadOptions& opt) {
  auto records = parse_records(text);
  if (records.empty()) throw DataError("csv: empty input");
  const auto& header = records.front();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[trim(header[i])] = i;
  for (const auto& h : header) {
    const auto name = trim(h);
    bool known = false;
    for (const auto& c : schema.columns()) known = known || c.name == name;
    if (!known) throw SchemaError("csv: header column '" + name + "' not in schema");
  }
  for (const auto& c : schema.columns()) {
    if (!pos.count(c.name)) throw SchemaError("csv: missing column '" + c.name + "'");
  }
  if (records.size() < 2) throw DataError("csv: empty input (header only)");

  Dataset ds;
  ds.schema = schema;
  ds.k = schema.feature_order().size();
  ds.m = schema.discrete_count();
  ds.n = records.size() - 1;
  ds.features.resize(ds.n * ds.k);
  ds.labels.resize(ds.n);

  const Dataset* ref = opt.encoding_reference;
  if (ref && ref->schema.fingerprint() != schema.fingerprint()) {
    throw SchemaError("csv: encoding reference has a different schema");
  }
  ds.categories = ref ? ref->categories : std::vector<std::vector<std::string>>(ds.m);
  std::vector<std::unordered_map<std::string, std::size_t>> cat_index(ds.m);
  for (std::size_t f = 0; f < ds.m; ++f)
    for (std::size_t c = 0; c < ds.categories[f].size(); ++c) cat_index[f][ds.categories[f][c]] = c;

  std::vector<std::size_t> col_of(ds.k);
  for (std::size_t f = 0; f < ds.k; ++f) col_of[f] = pos.at(schema.feature_order()[f]);
  const std::size_t label_col = pos.at(schema.label_name());

  std::vector<std::string> raw_labels(ds.n);
  for (std::size_t r = 0; r < ds.n; ++r) {
    const auto& rec = records[r + 1];
    const std::size_t row_no = r + 2;  // 1-based file line, header is line 1
    if (rec.size() != header.size()) {
      throw ParseError("csv: row " + std::to_string(row_no) + " has " + std::to_string(rec.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t f = 0; f < ds.k; ++f) {
      const std::string cell = trim(rec[col_of[f]]);
      const std::string& cname = schema.feature_order()[f];
      if (cell.empty()) {
        throw ParseError("csv: missing value at row " + std::to_string(row_no) + ", column '" + cname + "'");
      }
      if (f < ds.m) {
        auto it = cat_index[f].find(cell);
        std::size_t idx;
        if (it != cat_index[f].end()) {
          idx = it->second;
        } else if (!ref) {
          idx = ds.categories[f].size();
          ds.categories[f].push_back(cell);
          cat_index[f][cell] = idx;
        } else if (opt.allow_unknown_categories) {
          idx = ds.categories[f].size();
        } else {
          throw CategoryError("csv: unseen category '" + cell + "' at row " + std::to_string(row_no) +
                              ", column '" + cname + "'");
        }
        ds.features[r * ds.k + f] = static_cast<double>(idx);
      } else {
        double v;
        if (!parse_double(cell, v)) {
          throw ParseError("csv: cannot parse '" + cell + "' as a number at row " + std::to_string(row_no) +
                           ", column '" + cname + "'");
        }
        ds.features[r * ds.k + f] = v;
      }
    }
    raw_labels[r] = trim(rec[label_col]);
    if (raw_labels[r].empty()) {
      throw ParseError("csv: missing label at row " + std::to_string(row_no));
    }
  }

  if (ref) {
    ds.class_names = ref->class_names;
  } else {
    std::set<std::string> uniq(raw_labels.begin(), raw_labels.end());
    ds.class_names.assign(uniq.begin(), uniq.end());
  }
  std::unordered_map<std::string, int> class_index;
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) class_index[ds.class_names[c]] = static_cast<int>(c);
  for (std::size_t r = 0; r < ds.n; ++r) {
    auto it = class_index.find(raw_labels[r]);
    if (it == class_index.end()) {
      throw CategoryError("csv: unseen class label '" + raw_labels[r] + "' at row " + std::to_string(r + 2));
    }
    ds.labels[r] = it->second;
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema, const LoadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.erase(0, 3);
  }
  try {
    return parse_csv(text, schema, opt);
  } catch (const DataError& e) {
    // Re-throw with the file name attached, preserving the error family.
    const std::string msg = path.string() + ": " + e.what();
    if (dynamic_cast<const SchemaError*>(&e)) throw SchemaError(msg);
    if (dynamic_cast<const ParseError*>(&e)) throw ParseError(msg);
    if (dynamic_cast<const CategoryError*>(&e)) throw CategoryError(msg);
    throw DataError(msg);
  }
}

namespace {

// Per-class row lists (indices into `rows`' values), each shuffled with `rng`.
std::vector<std::vector<std::size_t>> shuffled_by_class(const Dataset& ds, std::span<const std::size_t> rows,
                                                        Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (auto r : rows) by_class[static_cast<std::size_t>(ds.labels[r])].push_back(r);
  for (auto& v : by_class) rng.shuffle(v);
  return by_class;
}

// Largest-remainder allocation of round(fraction * total) across classes, with
// each nonempty class keeping at least one row on both sides.
std::vector<std::size_t> allocate(const std::vector<std::vector<std::size_t>>& by_class, double fraction) {
  std::size_t total = 0;
  for (const auto& v : by_class) total += v.size();
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    rem.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < target && i < rem.size(); ++i) {
    ++quota[rem[i].second];
    ++assigned;
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    quota[c] = std::clamp<std::size_t>(quota[c], 1, by_class[c].size() - 1);
  }
  return quota;
}

}  // namespace

Dataset from_matrix(const Matrix& x, std::span<const int> labels, std::size_t num_classes) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw DimensionError("from_matrix: row/label count mismatch");
  std::vector<ColumnSpec> cols;
  for (Eigen::Index c = 0; c < x.cols(); ++c) cols.push_back({"x" + std::to_string(c), ColumnKind::continuous});
  cols.push_back({"class", ColumnKind::label});
  Dataset ds;
  ds.schema = Schema(std::move(cols));
  ds.n = static_cast<std::size_t>(x.rows());
  ds.k = static_cast<std::size_t>(x.cols());
  ds.features.assign(x.data(), x.data() + x.size());
  ds.labels.assign(labels.begin(), labels.end());
  for (int y : ds.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DataError("from_matrix: label out of range");
  }
  for (std::size_t c = 0; c < num_classes; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split: train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
  auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0 && counts[c] < 2) {
      throw StratificationError("split: class '" + ds.class_names[c] + "' has fewer than 2 samples");
    }
  }
  std::vector<std::size_t> all(ds.n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng("split", seed);
  auto by_class = shuffled_by_class(ds, all, rng);
  auto quota = allocate(by_class, train_fraction);
  SplitResult out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      (i < quota[c] ? out.train_rows : out.test_rows).push_back(by_class[c][i]);
    }
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = ds.subset(out.train_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const Dataset& ds, std::span<const std::size_t> rows, double fraction, std::uint64_t seed) {
  Rng rng("holdout", seed);
  auto by_class = shuffled_by_class(ds, rows, rng);
  std::vector<std::size_t> keep, held;
  for (auto& v : by_class) {
    if (v.size() < 2) {
      keep.insert(keep.end(), v.begin(), v.end());
      continue;
    }
    auto h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(v.size())));
    h = std::clamp<std::size_t>(h, 1, v.size() - 1);
    held.insert(held.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
    keep.insert(keep.end(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {keep, held};
}

FeatureStats compute_stats(const Dataset& train) {
  if (train.n == 0) throw DataError("compute_stats: empty training set");
  FeatureStats s;
  s.m = train.m;
  s.mean.assign(train.k, 0.0);
  s.stddev.assign(train.k, 1.0);
  const double n = static_cast<double>(train.n);
  for (std::size_t f = train.m; f < train.k; ++f) {
    double mu = 0.0;
    for (std::size_t r = 0; r < train.n; ++r) mu += train.at(r, f);
    mu /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < train.n; ++r) var += (train.at(r, f) - mu) * (train.at(r, f) - mu);
    var /= n;
    const double sd = std::sqrt(var);
    s.mean[f] = mu;
    s.stddev[f] = (sd > 1e-12 * std::max(1.0, std::abs(mu))) ? sd : 1.0;
  }
  return s;
}

nlohmann::json FeatureStats::to_json() const {
  return {{"discrete_count", m}, {"mean", mean}, {"stddev", stddev}};
}

FeatureStats FeatureStats::from_json(const nlohmann::json& j) {
  FeatureStats s;
  s.m = j.at("discrete_count").get<std::size_t>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  if (s.mean.size() != s.stddev.size() || s.m > s.mean.size()) {
    throw SchemaError("feature stats: inconsistent sizes");
  }
  return s;
}

void FeatureStats::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

FeatureStats FeatureStats::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

NumericLayout numeric_layout(const Dataset& ds) {
  NumericLayout l;
  for (std::size_t f = 0; f < ds.k; ++f) {
    const std::size_t w = f < ds.m ? ds.cardinality(f) : 1;
    for (std::size_t j = 0; j < w; ++j) l.source_feature.push_back(f);
  }
  return l;
}

Matrix numeric_view(const Dataset& ds, const FeatureStats& stats) {
  const auto layout = numeric_layout(ds);
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(ds.n), static_cast<Eigen::Index>(layout.width()));
  std::vector<std::size_t> offset(ds.k);
  for (std::size_t p = layout.width(); p-- > 0;) offset[layout.source_feature[p]] = p;
  for (std::size_t r = 0; r < ds.n; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t f = 0; f < ds.k; ++f) {
      const double v = ds.at(r, f);
      if (f < ds.m) {
        const auto c = static_cast<std::size_t>(v);
        if (c < ds.cardinality(f)) x(ri, static_cast<Eigen::Index>(offset[f] + c)) = 1.0;
      } else {
        x(ri, static_cast<Eigen::Index>(offset[f])) = stats.normalize(f, v);
      }
    }
  }
  return x;
}

Matrix normalized_cells(const Dataset& ds, const FeatureStats& stats) {
  Matrix x(static_cast<Eigen::Index>(ds.n), static_cast<Eigen::Index>(ds.k));
  for (std::size_t r = 0; r < ds.n; ++r)
    for (std::size_t f = 0; f < ds.k; ++f)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
          f < ds.m ? ds.at(r, f) : stats.normalize(f, ds.at(r, f));
  return x;
}

}  // namespace tfwt
