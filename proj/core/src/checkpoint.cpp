#include "promptrec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

constexpr std::array<char, 4> kMagic = {'P', 'X', 'R', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (std::size_t k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xffU);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(const char* bytes) {
  std::uint64_t v = 0;
  for (std::size_t k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k])) << (8 * k);
  return v;
}

nlohmann::json lm_to_json(const LmConfig& c) {
  return {{"width", c.width},       {"layers", c.layers},   {"heads", c.heads},
          {"ff_width", c.ff_width}, {"max_len", c.max_len}, {"vocab_size", c.vocab_size},
          {"dropout", c.dropout}};
}

LmConfig lm_from_json(const nlohmann::json& j) {
  LmConfig c;
  c.width = j.at("width").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_width = j.at("ff_width").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) s[static_cast<std::size_t>(k)] = kDigits[v & 0xfU];
  return s;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Checkpoint copy = checkpoint;  // tensors() needs mutable access
  auto tensors = copy.model.params.tensors();

  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    const auto bytes = static_cast<std::uint64_t>(t.tensor->size()) * sizeof(float);
    manifest.push_back({{"name", t.name}, {"shape", {t.tensor->rows(), t.tensor->cols()}}, {"offset", offset},
                        {"bytes", bytes}});
    offset += bytes;
  }

  nlohmann::json meta = {
      {"format_version", checkpoint.version},
      {"config", to_json(checkpoint.config)},
      {"lm", lm_to_json(checkpoint.model.params.lm.config)},
      {"vocabulary", checkpoint.model.vocab.regular_words()},
      {"vocab_hash", hex64(checkpoint.model.vocab.hash())},
      {"users", checkpoint.model.ids.users.ids()},
      {"items", checkpoint.model.ids.items.ids()},
      {"lambda_S", checkpoint.model.params.weights.lambda_s},
      {"lambda_R", checkpoint.model.params.weights.lambda_r},
      {"best_val_loss", nullptr},
      {"epoch", checkpoint.epoch},
      {"tensors", manifest},
      {"payload_bytes", offset},
  };
  if (checkpoint.best_val_loss) meta["best_val_loss"] = *checkpoint.best_val_loss;
  const std::string meta_text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFoundError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, meta_text.size());
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  for (const auto& t : tensors) {
    std::vector<char> buf(static_cast<std::size_t>(t.tensor->size()) * sizeof(float));
    for (Eigen::Index k = 0; k < t.tensor->size(); ++k) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t.tensor->data()[k]));
      for (std::size_t b = 0; b < 4; ++b) {
        buf[static_cast<std::size_t>(k) * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffU);
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IntegrityError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kHeader = kMagic.size() + 8;
  if (data.size() < kHeader) throw IntegrityError("checkpoint shorter than its header");
  if (std::memcmp(data.data(), kMagic.data(), kMagic.size()) != 0) throw IntegrityError("bad checkpoint magic");
  const std::uint64_t meta_len = get_u64(data.data() + kMagic.size());
  if (meta_len > data.size() - kHeader) throw IntegrityError("checkpoint truncated inside metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(data.substr(kHeader, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint cp;
  try {
    cp.version = meta.at("format_version").get<std::uint32_t>();
    if (cp.version != kCheckpointVersion) {
      throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(cp.version) +
                                    " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t payload = meta.at("payload_bytes").get<std::uint64_t>();
    if (data.size() != kHeader + meta_len + payload) {
      throw IntegrityError("checkpoint length " + std::to_string(data.size()) + " does not match header (" +
                           std::to_string(kHeader + meta_len + payload) + ")");
    }

    apply_json(meta.at("config"), cp.config);
    const LmConfig lm = lm_from_json(meta.at("lm"));
    cp.config.lm = lm;
    cp.model.vocab = Vocabulary(meta.at("vocabulary").get<std::vector<std::string>>());
    if (hex64(cp.model.vocab.hash()) != meta.at("vocab_hash").get<std::string>()) {
      throw IntegrityError("vocabulary hash mismatch inside checkpoint");
    }
    cp.model.ids.users = IdIndex(meta.at("users").get<std::vector<std::string>>());
    cp.model.ids.items = IdIndex(meta.at("items").get<std::vector<std::string>>());
    cp.model.params.tables = EmbeddingTables::zeros(cp.model.ids.users.size(), cp.model.ids.items.size(), lm.width);
    cp.model.params.lm = LmParameters::zeros(lm);
    cp.model.params.weights = {meta.at("lambda_S").get<double>(), meta.at("lambda_R").get<double>()};
    if (!meta.at("best_val_loss").is_null()) cp.best_val_loss = meta.at("best_val_loss").get<double>();
    cp.epoch = meta.at("epoch").get<std::size_t>();

    const auto& manifest = meta.at("tensors");
    auto tensors = cp.model.params.tensors();
    if (manifest.size() != tensors.size()) throw IntegrityError("tensor manifest has the wrong entry count");
    const char* base = data.data() + kHeader + meta_len;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const auto& entry = manifest[k];
      Matrix& t = *tensors[k].tensor;
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto bytes = entry.at("bytes").get<std::uint64_t>();
      if (entry.at("name").get<std::string>() != tensors[k].name || shape.size() != 2 || shape[0] != t.rows() ||
          shape[1] != t.cols() || bytes != static_cast<std::uint64_t>(t.size()) * 4 || offset + bytes > payload) {
        throw IntegrityError("manifest entry " + std::to_string(k) + " does not match tensor " + tensors[k].name);
      }
      for (Eigen::Index e = 0; e < t.size(); ++e) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(base[offset + static_cast<std::uint64_t>(e) * 4 + b]))
                  << (8 * b);
        }
        t.data()[e] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  return cp;
}

bool identical(const Checkpoint& a, const Checkpoint& b) {
  if (a.version != b.version || to_json(a.config) != to_json(b.config) || a.epoch != b.epoch) return false;
  if (a.best_val_loss.has_value() != b.best_val_loss.has_value()) return false;
  if (a.best_val_loss && !same_bits(*a.best_val_loss, *b.best_val_loss)) return false;
  if (!(a.model.vocab == b.model.vocab) || a.model.ids.users.ids() != b.model.ids.users.ids() ||
      a.model.ids.items.ids() != b.model.ids.items.ids()) {
    return false;
  }
  if (!(a.model.params.lm.config == b.model.params.lm.config)) return false;
  if (!same_bits(a.model.params.weights.lambda_s, b.model.params.weights.lambda_s) ||
      !same_bits(a.model.params.weights.lambda_r, b.model.params.weights.lambda_r)) {
    return false;
  }
  auto ta = const_cast<Parameters&>(a.model.params).tensors();
  auto tb = const_cast<Parameters&>(b.model.params).tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t k = 0; k < ta.size(); ++k) {
    if (!same_bits(*ta[k].tensor, *tb[k].tensor)) return false;
  }
  return true;
}

}  // namespace promptrec
