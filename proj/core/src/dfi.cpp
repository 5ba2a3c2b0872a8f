// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/dfi.hpp"

#include <algorithm>
#include <cmath>

#include "dos/error.hpp"
#include "dos/ops.hpp"
#include "dos/random.hpp"

namespace dos {
namespace {

ParamPtr dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  return make_parameter(name, normal_tensor(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

ParamPtr zeros(const std::string& name, std::size_t rows, std::size_t cols) {
  return make_parameter(name, Tensor::zeros(rows, cols));
}

ParamPtr ones(const std::string& name, std::size_t cols) { return make_parameter(name, Tensor::filled(1, cols, 1.0)); }

void append_unique(std::vector<ParamPtr>& out, const std::vector<ParamPtr>& more) {
  for (const auto& p : more)
    if (p && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
}

Var layer_norm(Graph& g, Var x, const ParamPtr& gain, const ParamPtr& bias) {
  return add_row(mul_row(layer_norm_rows(x), g.param(gain)), g.param(bias));
}

Var sum_quantized(const QuantTrace& trace) {
  Var acc = trace.layers.front().quantization.quantized;
  for (std::size_t l = 1; l < trace.layers.size(); ++l) acc = acc + trace.layers[l].quantization.quantized;
  return acc;
}

Var tower_recon(Graph& g, const OrqStack& stack, const TowerPass& tower, const std::optional<Decoder>& decoder,
                std::size_t seq_len) {
  Var recon;
  if (decoder) {
    const Var h = gelu(linear(sum_quantized(tower.trace), g.param(decoder->w1), g.param(decoder->b1)));
    recon = linear(h, g.param(decoder->w2), g.param(decoder->b2));
  } else {
    recon = decoder_free_reconstruct(g, stack, tower.trace);
  }
  return scale(sum_squares(tower.encoded - recon), 1.0 / static_cast<double>(seq_len));
}

}  // namespace

std::vector<ParamPtr> EncoderParams::parameters() const {
  std::vector<ParamPtr> out;
  if (kind == EncoderKind::transformer) {
    if (pos) out.push_back(pos);
    out.insert(out.end(), {ln1_gain, ln1_bias, wq, wk, wv, wo, bo, ln2_gain, ln2_bias, ff_w1, ff_b1, ff_w2, ff_b2});
  } else {
    out = {mlp_w1, mlp_b1, mlp_w2, mlp_b2};
  }
  return out;
}

EncoderParams make_transformer_encoder(const std::string& prefix, std::size_t dim, std::size_t max_len,
                                       std::size_t heads, std::size_t ffn_hidden, Rng& rng) {
  if (heads == 0 || dim % heads != 0) throw ContractViolation("encoder: dim must be divisible by head count");
  EncoderParams e;
  e.kind = EncoderKind::transformer;
  e.heads = heads;
  if (max_len > 0) e.pos = make_parameter(prefix + ".pos", normal_tensor(max_len, dim, 0.02, rng));
  e.ln1_gain = ones(prefix + ".ln1.gain", dim);
  e.ln1_bias = zeros(prefix + ".ln1.bias", 1, dim);
  e.wq = dense(prefix + ".attn.wq", dim, dim, rng);
  e.wk = dense(prefix + ".attn.wk", dim, dim, rng);
  e.wv = dense(prefix + ".attn.wv", dim, dim, rng);
  e.wo = dense(prefix + ".attn.wo", dim, dim, rng);
  e.bo = zeros(prefix + ".attn.bo", 1, dim);
  e.ln2_gain = ones(prefix + ".ln2.gain", dim);
  e.ln2_bias = zeros(prefix + ".ln2.bias", 1, dim);
  e.ff_w1 = dense(prefix + ".ffn.w1", dim, ffn_hidden, rng);
  e.ff_b1 = zeros(prefix + ".ffn.b1", 1, ffn_hidden);
  e.ff_w2 = dense(prefix + ".ffn.w2", ffn_hidden, dim, rng);
  e.ff_b2 = zeros(prefix + ".ffn.b2", 1, dim);
  return e;
}

EncoderParams make_mlp_encoder(const std::string& prefix, std::size_t dim, Rng& rng) {
  EncoderParams e;
  e.kind = EncoderKind::mlp;
  e.mlp_w1 = dense(prefix + ".mlp.w1", dim, dim, rng);
  e.mlp_b1 = zeros(prefix + ".mlp.b1", 1, dim);
  e.mlp_w2 = dense(prefix + ".mlp.w2", dim, dim, rng);
  e.mlp_b2 = zeros(prefix + ".mlp.b2", 1, dim);
  return e;
}

Var encode(Graph& g, const EncoderParams& p, Var rows, std::size_t seq_len) {
  if (seq_len == 0 || rows.rows() % seq_len != 0)
    throw ContractViolation("encode: row count is not a multiple of the sequence length");
  if (p.kind == EncoderKind::mlp) {
    const Var h = gelu(linear(rows, g.param(p.mlp_w1), g.param(p.mlp_b1)));
    return linear(h, g.param(p.mlp_w2), g.param(p.mlp_b2));
  }
  if (!p.pos) return transformer_block(g, p, rows, seq_len, false);
  if (seq_len > p.max_len())
    throw ContractViolation("encode: sequence length " + std::to_string(seq_len) + " exceeds positional table of " +
                            std::to_string(p.max_len()));
  const std::size_t blocks = rows.rows() / seq_len;
  return transformer_block(g, p, rows + tile_rows(slice_rows(g.param(p.pos), 0, seq_len), blocks), seq_len, false);
}

Var transformer_block(Graph& g, const EncoderParams& p, Var h, std::size_t seq_len, bool causal) {
  const Var a = layer_norm(g, h, p.ln1_gain, p.ln1_bias);
  const Var att = attention(matmul(a, g.param(p.wq)), matmul(a, g.param(p.wk)), matmul(a, g.param(p.wv)), seq_len,
                            p.heads, causal);
  const Var h2 = h + linear(att, g.param(p.wo), g.param(p.bo));

  const Var f = layer_norm(g, h2, p.ln2_gain, p.ln2_bias);
  const Var ff = linear(gelu(linear(f, g.param(p.ff_w1), g.param(p.ff_b1))), g.param(p.ff_w2), g.param(p.ff_b2));
  return h2 + ff;
}

DfiModel::DfiModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.dim == 0 || cfg.depth == 0 || cfg.codebook_size == 0 || cfg.seq_len == 0)
    throw ContractViolation("model dimensions must be positive");
  Rng rng = make_stream(seed, "init");
  const std::size_t d = cfg.dim;
  const std::size_t ffn = cfg.ffn_hidden == 0 ? 2 * d : cfg.ffn_hidden;
  const std::size_t hh = cfg.head_hidden == 0 ? d : cfg.head_hidden;

  if (cfg.mlp_encoder) {
    user_encoder = make_mlp_encoder("user.encoder", d, rng);
    item_encoder = make_mlp_encoder("item.encoder", d, rng);
  } else {
    user_encoder = make_transformer_encoder("user.encoder", d, cfg.seq_len, cfg.heads, ffn, rng);
    // The item input repeats one embedding, so positions carry no information
    // and would break the symmetry between its rows.
    item_encoder = make_transformer_encoder("item.encoder", d, 0, cfg.heads, ffn, rng);
  }

  OrqStackConfig sc{d, cfg.depth, cfg.codebook_size, cfg.primary_dims, cfg.scorer_hidden};
  if (cfg.unshared_codebook) {
    user_orq = make_orq_stack("user.orq", sc, rng);
    item_orq = make_orq_stack("item.orq", sc, rng);
  } else {
    std::vector<CodebookPtr> shared;
    for (std::size_t l = 0; l < cfg.depth; ++l)
      shared.push_back(make_codebook("shared.codebook" + std::to_string(l), cfg.codebook_size, d, rng));
    user_orq = make_orq_stack("user.orq", sc, rng, shared);
    item_orq = make_orq_stack("item.orq", sc, rng, shared);
  }

  user_agg = dense("user.agg", d, d, rng);
  item_agg = dense("item.agg", d, d, rng);

  head.w1 = dense("head.w1", 2 * d, hh, rng);
  head.b1 = zeros("head.b1", 1, hh);
  head.w2 = dense("head.w2", hh, 1, rng);
  head.b2 = zeros("head.b2", 1, 1);

  for (std::size_t l = 0; l < cfg.depth; ++l) {
    user_mi.push_back(MiHead{zeros("user.mi" + std::to_string(l) + ".w", d, 1), zeros("user.mi" + std::to_string(l) + ".b", 1, 1)});
    item_mi.push_back(MiHead{zeros("item.mi" + std::to_string(l) + ".w", d, 1), zeros("item.mi" + std::to_string(l) + ".b", 1, 1)});
  }

  if (cfg.with_decoder) {
    auto make_decoder = [&](const std::string& name) {
      return Decoder{dense(name + ".w1", d, d, rng), zeros(name + ".b1", 1, d), dense(name + ".w2", d, d, rng),
                     zeros(name + ".b2", 1, d)};
    };
    user_decoder = make_decoder("user.decoder");
    item_decoder = make_decoder("item.decoder");
  }
}

std::vector<ParamPtr> DfiModel::parameters() const {
  std::vector<ParamPtr> out;
  append_unique(out, user_encoder.parameters());
  append_unique(out, item_encoder.parameters());
  append_unique(out, user_orq.parameters());
  append_unique(out, item_orq.parameters());
  append_unique(out, {user_agg, item_agg, head.w1, head.b1, head.w2, head.b2});
  for (const auto& m : user_mi) append_unique(out, {m.w, m.b});
  for (const auto& m : item_mi) append_unique(out, {m.w, m.b});
  for (const auto* dec : {&user_decoder, &item_decoder})
    if (*dec) append_unique(out, {(*dec)->w1, (*dec)->b1, (*dec)->w2, (*dec)->b2});
  return out;
}

std::vector<CodebookPtr> DfiModel::codebooks() const {
  std::vector<CodebookPtr> out;
  for (const auto* stack : {&user_orq, &item_orq})
    for (const auto& l : stack->layers)
      if (std::find(out.begin(), out.end(), l.codebook) == out.end()) out.push_back(l.codebook);
  return out;
}

Batch make_batch(const SemanticEmbeddingTable& table, std::span<const InteractionSample> samples,
                 const ModelConfig& cfg) {
  const std::size_t d = table.dim();
  if (d != cfg.dim) throw ContractViolation("embedding width " + std::to_string(d) + " != model dim " + std::to_string(cfg.dim));
  if (samples.empty()) throw ContractViolation("make_batch: empty batch");
  const std::size_t S = cfg.seq_len, Si = cfg.item_len();
  std::vector<double> user, item;
  user.reserve(samples.size() * S * d);
  item.reserve(samples.size() * Si * d);
  Batch b;
  for (const auto& s : samples) {
    if (s.seq.size() != S)
      throw ContractViolation("sample sequence length " + std::to_string(s.seq.size()) + " != configured " + std::to_string(S));
    for (std::size_t i : s.seq) {
      const auto r = table.row(i);
      user.insert(user.end(), r.begin(), r.end());
    }
    const auto t = table.row(s.target);
    for (std::size_t k = 0; k < Si; ++k) item.insert(item.end(), t.begin(), t.end());
    b.labels.push_back(static_cast<double>(s.label));
  }
  b.size = samples.size();
  b.user_rows = Tensor(b.size * S, d, std::move(user));
  b.item_rows = Tensor(b.size * Si, d, std::move(item));
  return b;
}

Var aggregate(Graph& g, const QuantTrace& trace, const ParamPtr& agg, std::size_t seq_len) {
  if (trace.layers.empty()) throw ContractViolation("aggregate: empty trace");
  return matmul(segment_mean(sum_quantized(trace), seq_len), g.param(agg));
}

Var predict(Graph& g, const PredictionHead& head, Var e_user, Var e_item) {
  const Var h = gelu(linear(concat_cols(e_user, e_item), g.param(head.w1), g.param(head.b1)));
  return sigmoid(linear(h, g.param(head.w2), g.param(head.b2)));
}

Var bce(Graph&, Var prob, std::span<const double> labels) { return bce_sum(prob, labels, 1e-7); }

ModelPass forward(Graph& g, const DfiModel& model, const Batch& batch) {
  const auto& cfg = model.config();
  ModelPass pass;
  pass.user.encoded = encode(g, model.user_encoder, g.constant(batch.user_rows), cfg.seq_len);
  pass.user.trace = orq_forward(g, model.user_orq, pass.user.encoded);
  pass.user.embedding = aggregate(g, pass.user.trace, model.user_agg, cfg.seq_len);

  pass.item.encoded = encode(g, model.item_encoder, g.constant(batch.item_rows), cfg.item_len());
  pass.item.trace = orq_forward(g, model.item_orq, pass.item.encoded);
  pass.item.embedding = aggregate(g, pass.item.trace, model.item_agg, cfg.item_len());

  pass.prob = predict(g, model.head, pass.user.embedding, pass.item.embedding);
  return pass;
}

Var mutual_loss(Graph& g, const DfiModel& model, const QuantTrace& user_trace, const QuantTrace& item_trace,
                std::span<const double> labels) {
  const auto& cfg = model.config();
  const std::size_t layers = cfg.mutual_first_layer_only ? 1 : cfg.depth;
  Var total = g.constant(Tensor::scalar(0.0));
  const struct {
    const QuantTrace* trace;
    const std::vector<MiHead>* heads;
    std::size_t len;
  } towers[] = {{&user_trace, &model.user_mi, cfg.seq_len}, {&item_trace, &model.item_mi, cfg.item_len()}};
  for (const auto& t : towers) {
    for (std::size_t l = 0; l < layers; ++l) {
      const Var pooled = segment_mean(t.trace->layers[l].selection.x_pri, t.len);
      const MiHead& h = (*t.heads)[l];
      total = total + bce_sum(sigmoid(linear(pooled, g.param(h.w), g.param(h.b))), labels);
    }
  }
  return total;
}

LossValues LossTerms::values() const {
  return LossValues{total.value().item(),  bce.value().item(),   orth.value().item(),
                    mutual.value().item(), recon.value().item(), vq.value().item()};
}

LossOutput total_loss(Graph& g, const DfiModel& model, const Batch& batch, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ContractViolation("loss weights must be >= 0");
  const auto& cfg = model.config();
  LossOutput out;
  out.pass = forward(g, model, batch);
  auto& t = out.terms;

  t.bce = bce(g, out.pass.prob, batch.labels);

  t.orth = g.constant(Tensor::scalar(0.0));
  for (const auto* stack : {&model.user_orq, &model.item_orq})
    for (const auto& layer : stack->layers) t.orth = t.orth + orth_penalty(g, layer);

  t.mutual = mutual_loss(g, model, out.pass.user.trace, out.pass.item.trace, batch.labels);

  t.recon = tower_recon(g, model.user_orq, out.pass.user, model.user_decoder, cfg.seq_len) +
            tower_recon(g, model.item_orq, out.pass.item, model.item_decoder, cfg.item_len());

  t.vq = scale(vq_loss(g, out.pass.user.trace, beta), 1.0 / static_cast<double>(cfg.seq_len)) +
         scale(vq_loss(g, out.pass.item.trace, beta), 1.0 / static_cast<double>(cfg.item_len()));

  t.total = t.bce + scale(t.orth + t.mutual, alpha) + t.recon + t.vq;
  return out;
}

std::vector<double> predict_scores(const DfiModel& model, const SemanticEmbeddingTable& table,
                                   std::span<const InteractionSample> samples, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - begin);
    const Batch b = make_batch(table, samples.subspan(begin, n), model.config());
    Graph g;
    const ModelPass pass = forward(g, model, b);
    const auto p = pass.prob.value().data();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

SidTable export_item_sids(const DfiModel& model, const SemanticEmbeddingTable& table, std::size_t batch_size) {
  const auto& cfg = model.config();
  if (table.dim() != cfg.dim) throw ContractViolation("export_item_sids: table width does not match model");
  const std::size_t Si = cfg.item_len(), d = cfg.dim;
  SidTable out;
  out.reserve(table.n_items());
  for (std::size_t begin = 0; begin < table.n_items(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, table.n_items() - begin);
    std::vector<double> rows;
    rows.reserve(n * Si * d);
    for (std::size_t i = begin; i < begin + n; ++i)
      for (std::size_t k = 0; k < Si; ++k) rows.insert(rows.end(), table.row(i).begin(), table.row(i).end());
    Graph g;
    const Var enc = encode(g, model.item_encoder, g.constant(Tensor(n * Si, d, std::move(rows))), Si);
    const QuantTrace trace = orq_forward(g, model.item_orq, enc);
    for (std::size_t b = 0; b < n; ++b) {
      SidEntry e{table.ids()[begin + b], {}};
      for (const auto& lt : trace.layers) e.codes.push_back(lt.quantization.index[b * Si]);
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace dos
