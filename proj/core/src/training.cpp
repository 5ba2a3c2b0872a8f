// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "dos/eval.hpp"
#include "dos/ops.hpp"
#include "dos/random.hpp"

namespace dos {
namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

std::vector<InteractionSample> pick(std::span<const InteractionSample> samples, std::span<const std::size_t> order,
                                    std::size_t begin, std::size_t count) {
  std::vector<InteractionSample> out;
  out.reserve(count);
  for (std::size_t i = begin; i < begin + count; ++i) out.push_back(samples[order[i]]);
  return out;
}

std::vector<int> labels_of(std::span<const InteractionSample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void initialize_codebooks(const DfiModel& model, const SemanticEmbeddingTable& table,
                          std::span<const InteractionSample> train, std::uint64_t seed) {
  Rng rng = make_stream(seed, "codebook");
  const std::size_t n = std::min<std::size_t>(train.size(), 256);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto subset = pick(train, order, 0, n);
  const Batch b = make_batch(table, subset, model.config());
  Graph g;
  const Tensor user = encode(g, model.user_encoder, g.constant(b.user_rows), model.config().seq_len).value();
  const Tensor item = encode(g, model.item_encoder, g.constant(b.item_rows), model.config().item_len()).value();
  const OrqStack* stacks[] = {&model.user_orq, &model.item_orq};
  const Tensor inputs[] = {user, item};
  fit_codebooks_kmeans(stacks, inputs, rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (alpha < 0.0 || beta < 0.0) fail("alpha and beta must be >= 0");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (patience < 1) fail("patience must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  const auto& m = model;
  if (m.dim == 0 || m.depth == 0 || m.codebook_size == 0 || m.seq_len == 0) fail("dim, depth, codebook_size and seq_len must be positive");
  if (m.heads == 0 || m.dim % m.heads != 0) fail("heads must divide dim");
  if (!m.primary_dims.empty()) {
    if (m.primary_dims.size() != m.depth)
      fail("primary_dims has " + std::to_string(m.primary_dims.size()) + " entries for depth " + std::to_string(m.depth));
    for (std::size_t k : m.primary_dims)
      if (k == 0 || k > m.dim) fail("primary_dims entries must be in [1, dim]");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"profile", profile},
          {"alpha", alpha},
          {"beta", beta},
          {"dim", model.dim},
          {"depth", model.depth},
          {"codebook_size", model.codebook_size},
          {"primary_dims", model.primary_dims},
          {"seq_len", model.seq_len},
          {"item_seq_len", model.item_seq_len},
          {"heads", model.heads},
          {"ffn_hidden", model.ffn_hidden},
          {"scorer_hidden", model.scorer_hidden},
          {"head_hidden", model.head_hidden},
          {"mlp_encoder", model.mlp_encoder},
          {"unshared_codebook", model.unshared_codebook},
          {"with_decoder", model.with_decoder},
          {"mutual_first_layer_only", model.mutual_first_layer_only},
          {"batch_size", batch_size},
          {"lr", lr},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"kmeans_init", kmeans_init},
          {"dead_code_reset", dead_code_reset},
          {"table_path", table_path},
          {"samples_path", samples_path}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const TrainConfig reference;
  const auto known = reference.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");

  std::string profile = "desk";
  read_field(j, "profile", profile);
  TrainConfig c = profile_config(profile);
  read_field(j, "alpha", c.alpha);
  read_field(j, "beta", c.beta);
  read_field(j, "dim", c.model.dim);
  read_field(j, "depth", c.model.depth);
  read_field(j, "codebook_size", c.model.codebook_size);
  read_field(j, "primary_dims", c.model.primary_dims);
  read_field(j, "seq_len", c.model.seq_len);
  read_field(j, "item_seq_len", c.model.item_seq_len);
  read_field(j, "heads", c.model.heads);
  read_field(j, "ffn_hidden", c.model.ffn_hidden);
  read_field(j, "scorer_hidden", c.model.scorer_hidden);
  read_field(j, "head_hidden", c.model.head_hidden);
  read_field(j, "mlp_encoder", c.model.mlp_encoder);
  read_field(j, "unshared_codebook", c.model.unshared_codebook);
  read_field(j, "with_decoder", c.model.with_decoder);
  read_field(j, "mutual_first_layer_only", c.model.mutual_first_layer_only);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "lr", c.lr);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "seed", c.seed);
  read_field(j, "kmeans_init", c.kmeans_init);
  read_field(j, "dead_code_reset", c.dead_code_reset);
  read_field(j, "table_path", c.table_path);
  read_field(j, "samples_path", c.samples_path);
  c.validate();
  return c;
}

TrainConfig desk_profile() {
  TrainConfig c;
  c.profile = "desk";
  c.model.dim = 32;
  c.model.codebook_size = 64;
  c.model.seq_len = 10;
  c.batch_size = 128;
  return c;
}

TrainConfig paper_profile() {
  TrainConfig c;
  c.profile = "paper";
  c.model.dim = 1024;
  c.model.codebook_size = 1024;
  c.model.seq_len = 10;
  c.model.heads = 8;
  c.batch_size = 1024;
  return c;
}

TrainConfig profile_config(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

// ---------------------------------------------------------------------------
// Data

DataSplits split_dataset(std::span<const InteractionSample> samples, std::uint64_t seed,
                         std::array<std::size_t, 3> ratios) {
  const std::size_t total = ratios[0] + ratios[1] + ratios[2];
  if (total == 0 || ratios[0] == 0) throw ConfigError("split ratios must give the training split a positive share");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(seed, "shuffle/split");
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = samples.size();
  const std::size_t n_train = n * ratios[0] / total;
  const std::size_t n_val = n * ratios[1] / total;
  DataSplits s;
  s.train = pick(samples, order, 0, n_train);
  s.val = pick(samples, order, n_train, n_val);
  s.test = pick(samples, order, n_train + n_val, n - n_train - n_val);
  return s;
}

// ---------------------------------------------------------------------------
// Early stopping

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double metric) {
  ++epoch_;
  if (best_epoch_ == 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return bad_ >= patience_;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(std::vector<ParamPtr> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    state_.m.push_back(Tensor::zeros(p->value.rows(), p->value.cols()));
    state_.v.push_back(Tensor::zeros(p->value.rows(), p->value.cols()));
  }
}

void Adam::set_state(AdamState s) {
  if (s.m.size() != params_.size() || s.v.size() != params_.size())
    throw ContractViolation("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (s.m[i].shape() != params_[i]->value.shape() || s.v[i].shape() != params_[i]->value.shape())
      throw ContractViolation("optimizer state shape mismatch for " + params_[i]->name);
  state_ = std::move(s);
}

void Adam::step(const Gradients& grads) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!grads.contains(p)) continue;
    const auto g = grads.at(p).data();
    const auto w = p.value.data();
    const auto m0 = state_.m[i].data();
    const auto v0 = state_.v[i].data();
    std::vector<double> m(g.size()), v(g.size()), nw(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m0[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v0[j] + (1.0 - beta2_) * g[j] * g[j];
      nw[j] = w[j] - lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
    const std::size_t r = p.value.rows(), c = p.value.cols();
    try {
      state_.m[i] = Tensor(r, c, std::move(m));
      state_.v[i] = Tensor(r, c, std::move(v));
      p.value = Tensor(r, c, std::move(nw));
    } catch (const NumericError& e) {
      throw NumericError("update of parameter '" + p.name + "' is not finite: " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Dead codes

std::size_t dead_code_reset(Codebook& codebook, const Tensor& recent, Rng& rng, double noise) {
  if (codebook.usage.size() != codebook.size()) codebook.reset_usage();
  std::vector<std::size_t> dead;
  for (std::size_t c = 0; c < codebook.size(); ++c)
    if (codebook.usage[c] == 0) dead.push_back(c);
  if (!dead.empty()) {
    if (recent.rows() == 0 || recent.cols() != codebook.dim())
      throw ContractViolation("dead_code_reset: recent features do not match the codebook width");
    std::vector<double> values = codebook.vectors->value.to_vector();
    const std::size_t d = codebook.dim();
    std::uniform_int_distribution<std::size_t> row(0, recent.rows() - 1);
    std::normal_distribution<double> jitter(0.0, noise);
    for (std::size_t c : dead) {
      const auto src = recent.row_span(row(rng));
      for (std::size_t j = 0; j < d; ++j) values[c * d + j] = src[j] + jitter(rng);
    }
    codebook.vectors->value = Tensor(codebook.size(), d, std::move(values));
  }
  codebook.reset_usage();
  return dead.size();
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const TrainConfig& cfg, const SemanticEmbeddingTable& table, const DataSplits& splits,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (splits.train.empty() || splits.val.empty()) throw ContractViolation("train: empty training or validation split");
  if (table.dim() != cfg.model.dim)
    throw ConfigMismatch("embedding table width " + std::to_string(table.dim()) + " does not match config dim " +
                         std::to_string(cfg.model.dim));

  DfiModel model(cfg.model, cfg.seed);
  if (cfg.kmeans_init) initialize_codebooks(model, table, splits.train, cfg.seed);
  const auto books = model.codebooks();
  for (const auto& b : books) b->reset_usage();

  Adam adam(model.parameters(), cfg.lr);
  Rng shuffle_rng = make_stream(cfg.seed, "shuffle/epoch");
  Rng reset_rng = make_stream(cfg.seed, "reset");
  EarlyStopping stopper(cfg.patience);
  const std::vector<int> val_labels = labels_of(splits.val);

  TrainResult result;
  Checkpoint last_good = make_checkpoint(model, &adam, cfg, 0, {});
  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossValues sums;
    std::vector<std::vector<double>> recent(books.size());
    std::vector<std::size_t> recent_rows(books.size());

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - begin);
      const auto samples = pick(splits.train, order, begin, n);
      const Batch batch = make_batch(table, samples, cfg.model);
      Graph g;
      try {
        const LossOutput out = total_loss(g, model, batch, cfg.alpha, cfg.beta);
        const LossValues v = out.terms.values();
        sums.total += v.total;
        sums.bce += v.bce;
        sums.orth += v.orth;
        sums.mutual += v.mutual;
        sums.recon += v.recon;
        sums.vq += v.vq;

        std::fill(recent_rows.begin(), recent_rows.end(), 0);
        for (auto& r : recent) r.clear();
        for (const auto* tower : {&out.pass.user, &out.pass.item}) {
          const OrqStack& stack = tower == &out.pass.user ? model.user_orq : model.item_orq;
          for (std::size_t l = 0; l < stack.depth(); ++l) {
            Codebook& book = *stack.layers[l].codebook;
            book.record_usage(tower->trace.layers[l].quantization.index);
            const std::size_t slot =
                static_cast<std::size_t>(std::find(books.begin(), books.end(), stack.layers[l].codebook) - books.begin());
            const Tensor& xp = tower->trace.layers[l].selection.x_pri.value();
            recent[slot].insert(recent[slot].end(), xp.data().begin(), xp.data().end());
            recent_rows[slot] += xp.rows();
          }
        }
        adam.step(g.backward(out.terms.total));
      } catch (const NumericError& e) {
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + " at batch offset " +
                                   std::to_string(begin) + ": " + e.what(),
                               last_good);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double n_train = static_cast<double>(order.size());
    rec.train = LossValues{sums.total / n_train, sums.bce / n_train,   sums.orth / n_train,
                           sums.mutual / n_train, sums.recon / n_train, sums.vq / n_train};
    const auto scores = predict_scores(model, table, splits.val);
    rec.val_auc = auc(scores, val_labels);
    rec.val_f1 = f1(scores, val_labels);
    for (std::size_t b = 0; b < books.size(); ++b) {
      rec.usage.push_back(books[b]->usage);
      std::vector<std::size_t> dead;
      if (cfg.dead_code_reset) {
        for (std::size_t c = 0; c < books[b]->usage.size(); ++c)
          if (books[b]->usage[c] == 0) dead.push_back(c);
        const std::size_t d = books[b]->dim();
        dead_code_reset(*books[b], Tensor(recent_rows[b], d, std::move(recent[b])), reset_rng);
      } else {
        books[b]->reset_usage();
      }
      rec.reset_codes.push_back(std::move(dead));
    }

    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const bool stop = stopper.update(rec.val_auc);
    last_good = make_checkpoint(model, &adam, cfg, epoch, result.history);
    if (stopper.improved_last()) {
      result.best = last_good;
      result.best_epoch = epoch;
    }
    result.stopped_epoch = epoch;
    if (stop) break;
  }
  result.best.history = result.history;
  return result;
}

void write_metrics_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write metrics log " + path.string());
  out << "epoch,train_loss,bce,orth,mutual,recon,vq,val_auc,val_f1\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt(r.train.total) << ',' << fmt(r.train.bce) << ',' << fmt(r.train.orth) << ','
        << fmt(r.train.mutual) << ',' << fmt(r.train.recon) << ',' << fmt(r.train.vq) << ',' << fmt(r.val_auc) << ','
        << fmt(r.val_f1) << '\n';
  }
}

}  // namespace dos
