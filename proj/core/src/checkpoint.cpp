// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "dos/training.hpp"

namespace dos {
namespace {

constexpr char kMagic[8] = {'D', 'O', 'S', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n)
      throw CorruptCheckpoint("checkpoint truncated: needed " + std::to_string(n) + " more bytes at offset " +
                              std::to_string(pos_) + ", file has " + std::to_string(bytes_.size()));
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json record_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train",
           {{"total", r.train.total},
            {"bce", r.train.bce},
            {"orth", r.train.orth},
            {"mutual", r.train.mutual},
            {"recon", r.train.recon},
            {"vq", r.train.vq}}},
          {"val_auc", r.val_auc},
          {"val_f1", r.val_f1},
          {"usage", r.usage},
          {"reset_codes", r.reset_codes}};
}

EpochRecord record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  const auto& t = j.at("train");
  r.train = LossValues{t.at("total").get<double>(),  t.at("bce").get<double>(),   t.at("orth").get<double>(),
                       t.at("mutual").get<double>(), t.at("recon").get<double>(), t.at("vq").get<double>()};
  r.val_auc = j.at("val_auc").get<double>();
  r.val_f1 = j.at("val_f1").get<double>();
  r.usage = j.at("usage").get<std::vector<std::vector<std::uint64_t>>>();
  r.reset_codes = j.at("reset_codes").get<std::vector<std::vector<std::size_t>>>();
  return r;
}

}  // namespace

Checkpoint make_checkpoint(const DfiModel& model, const Adam* opt, const TrainConfig& cfg, std::size_t epoch,
                           std::vector<EpochRecord> history) {
  Checkpoint c;
  c.config = cfg;
  c.epoch = epoch;
  c.history = std::move(history);
  for (const auto& p : model.parameters()) c.params.push_back({p->name, p->value});
  if (opt) c.optimizer = opt->state();
  return c;
}

DfiModel restore_model(const Checkpoint& ckpt) {
  DfiModel model(ckpt.config.model, ckpt.config.seed);
  std::map<std::string, const Tensor*> stored;
  for (const auto& p : ckpt.params) stored[p.name] = &p.value;
  const auto params = model.parameters();
  if (params.size() != ckpt.params.size())
    throw ConfigMismatch("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters, model expects " +
                         std::to_string(params.size()));
  for (const auto& p : params) {
    const auto it = stored.find(p->name);
    if (it == stored.end()) throw ConfigMismatch("checkpoint lacks parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape())
      throw ConfigMismatch("parameter '" + p->name + "' has shape " + std::to_string(it->second->rows()) + "x" +
                           std::to_string(it->second->cols()) + " in the checkpoint, model expects " +
                           std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = *it->second;
  }
  return model;
}

void check_compatible(const ModelConfig& a, const ModelConfig& b) {
  auto check = [](const char* field, auto stored, auto requested) {
    if (stored != requested)
      throw ConfigMismatch(std::string("checkpoint ") + field + " differs from the requested config");
  };
  check("dim", a.dim, b.dim);
  check("depth", a.depth, b.depth);
  check("codebook_size", a.codebook_size, b.codebook_size);
  check("primary_dims", a.primary_dims, b.primary_dims);
  check("seq_len", a.seq_len, b.seq_len);
  check("item_seq_len", a.item_len(), b.item_len());
  check("heads", a.heads, b.heads);
  check("ffn_hidden", a.ffn_hidden, b.ffn_hidden);
  check("scorer_hidden", a.scorer_hidden, b.scorer_hidden);
  check("head_hidden", a.head_hidden, b.head_hidden);
  check("mlp_encoder", a.mlp_encoder, b.mlp_encoder);
  check("unshared_codebook", a.unshared_codebook, b.unshared_codebook);
  check("with_decoder", a.with_decoder, b.with_decoder);
  check("mutual_first_layer_only", a.mutual_first_layer_only, b.mutual_first_layer_only);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["config"] = ckpt.config.to_json();
  meta["epoch"] = ckpt.epoch;
  meta["history"] = nlohmann::json::array();
  for (const auto& r : ckpt.history) meta["history"].push_back(record_to_json(r));
  meta["params"] = nlohmann::json::array();
  for (const auto& p : ckpt.params)
    meta["params"].push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  const bool with_opt = !ckpt.optimizer.m.empty();
  if (with_opt && (ckpt.optimizer.m.size() != ckpt.params.size() || ckpt.optimizer.v.size() != ckpt.params.size()))
    throw ContractViolation("save_checkpoint: optimizer state does not match parameters");
  meta["optimizer"] = {{"present", with_opt}, {"step", ckpt.optimizer.step}};
  const std::string meta_text = meta.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u32(bytes, kCheckpointVersion);
  put_u64(bytes, meta_text.size());
  bytes += meta_text;
  auto put_tensor = [&](const Tensor& t) {
    for (double v : t.data()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  };
  for (const auto& p : ckpt.params) put_tensor(p.value);
  if (with_opt) {
    for (const auto& t : ckpt.optimizer.m) put_tensor(t);
    for (const auto& t : ckpt.optimizer.v) put_tensor(t);
  }
  put_u64(bytes, fnv1a(bytes));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw CorruptCheckpoint(path.string() + " is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t meta_len = r.u64();
  if (meta_len > r.remaining()) throw CorruptCheckpoint("checkpoint truncated inside the metadata block");
  const std::string meta_text = r.raw(meta_len);

  Checkpoint c;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  bool with_opt = false;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    c.config = TrainConfig::from_json(meta.at("config"));
    c.epoch = meta.at("epoch").get<std::size_t>();
    for (const auto& h : meta.at("history")) c.history.push_back(record_from_json(h));
    for (const auto& p : meta.at("params")) {
      c.params.push_back({p.at("name").get<std::string>(), Tensor()});
      shapes.emplace_back(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>());
    }
    with_opt = meta.at("optimizer").at("present").get<bool>();
    c.optimizer.step = meta.at("optimizer").at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata is damaged: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("checkpoint config is invalid: ") + e.what());
  }

  std::size_t payload = 0;
  for (const auto& [rows, cols] : shapes) payload += rows * cols;
  const std::size_t expected = payload * (with_opt ? 3 : 1) * 8 + 8;
  if (r.remaining() != expected)
    throw CorruptCheckpoint("checkpoint payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                            std::to_string(expected));
  if (fnv1a(bytes.substr(0, bytes.size() - 8)) != Reader(bytes.substr(bytes.size() - 8)).u64())
    throw CorruptCheckpoint("checkpoint checksum mismatch");

  auto read_tensor = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = r.f64();
    try {
      return Tensor(rows, cols, std::move(v));
    } catch (const NumericError& e) {
      throw CorruptCheckpoint(std::string("checkpoint holds non-finite values: ") + e.what());
    }
  };
  for (std::size_t i = 0; i < c.params.size(); ++i) c.params[i].value = read_tensor(shapes[i].first, shapes[i].second);
  if (with_opt) {
    for (const auto& [rows, cols] : shapes) c.optimizer.m.push_back(read_tensor(rows, cols));
    for (const auto& [rows, cols] : shapes) c.optimizer.v.push_back(read_tensor(rows, cols));
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  check_compatible(c.config.model, expected.model);
  return c;
}

}  // namespace dos
