#include "tfwt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tfwt/errors.hpp"

namespace tfwt {

namespace {

constexpr char kMagic[8] = {'T', 'F', 'W', 'T', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const Matrix* Checkpoint::extra(const std::string& name) const {
  for (const auto& [n, m] : extras)
    if (n == name) return &m;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const WeighterModel& model, const nlohmann::json& manifest,
                     const std::vector<std::pair<std::string, Matrix>>& extras) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["encoder"] = model.config.to_json();
  header["tokenizer"] = model.tokenizer.config_json();
  header["fingerprint"] = model.fingerprint;
  header["stats"] = model.stats.to_json();
  header["column_offset"] = model.column_offset;
  header["manifest"] = manifest;
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  const ParamList params = model.params();
  for (const auto& p : params) {
    dir.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.numel();
  }
  header["tensors"] = dir;
  nlohmann::json extra_dir = nlohmann::json::array();
  for (const auto& [name, m] : extras) {
    extra_dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(m.size());
  }
  header["extras"] = extra_dir;
  header["payload_values"] = offset;
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
      const auto d = p.value.data();
      os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    for (const auto& [name, m] : extras) {
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  if (header.value("format_version", 0) != kFormatVersion) throw DataError("checkpoint: unsupported format version");

  Checkpoint ck;
  WeighterModel& m = ck.model;
  m.config = EncoderConfig::from_json(header.at("encoder"));
  const auto& tok = header.at("tokenizer");
  const auto k = tok.at("num_features").get<std::size_t>();
  Rng scratch(0);
  m.tokenizer = FeatureTokenizer(tok.at("cardinalities").get<std::vector<std::size_t>>(), k,
                                 tok.at("d").get<std::size_t>(), scratch);
  m.encoder = EncoderStack(m.config, scratch);
  m.decoder = DecoderStack(m.config, k, scratch);
  m.fingerprint = header.at("fingerprint").get<std::string>();
  m.stats = FeatureStats::from_json(header.at("stats"));
  m.column_offset = header.at("column_offset").get<std::vector<double>>();
  ck.manifest = header.value("manifest", nlohmann::json::object());

  const ParamList params = m.params();
  const auto& dir = header.at("tensors");
  if (dir.size() != params.size()) throw DataError("checkpoint: tensor directory does not match model structure");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = dir[i];
    if (e.at("name").get<std::string>() != params[i].name || e.at("shape").get<Shape>() != params[i].value.shape()) {
      throw DataError("checkpoint: tensor " + e.at("name").get<std::string>() + " does not match " + params[i].name);
    }
    auto dst = Tensor(params[i].value).mutable_data();
    if (!is.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
      throw DataError("checkpoint: truncated payload");
    }
  }
  for (const auto& e : header.value("extras", nlohmann::json::array())) {
    Matrix m(e.at("rows").get<Eigen::Index>(), e.at("cols").get<Eigen::Index>());
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw DataError("checkpoint: truncated payload");
    }
    ck.extras.emplace_back(e.at("name").get<std::string>(), std::move(m));
  }
  return ck;
}

}  // namespace tfwt
