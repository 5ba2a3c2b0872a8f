// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dos/error.hpp"
#include "dos/ops.hpp"
#include "dos/random.hpp"
#include "dos/training.hpp"

namespace dos {
namespace {

double mean_squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s / static_cast<double>(t.rows());
}

Tensor subtract_codes(const Tensor& x, const Tensor& centroids, std::span<const std::size_t> codes) {
  std::vector<double> out = x.to_vector();
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] -= centroids(codes[i], j);
  return Tensor(x.rows(), d, std::move(out));
}

SidTable to_table(const SemanticEmbeddingTable& table, const std::vector<SemanticId>& codes) {
  SidTable out;
  out.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out.push_back({table.ids()[i], codes[i]});
  return out;
}

ParamPtr dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  return make_parameter(name, normal_tensor(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

Var encode_latent(Graph& g, const RQVAELiteModel& m, Var x) {
  const Var h = gelu(linear(x, g.param(m.enc_w1), g.param(m.enc_b1)));
  return linear(h, g.param(m.enc_w2), g.param(m.enc_b2));
}

Tensor latent_of(const RQVAELiteModel& m, const Tensor& rows) {
  Graph g;
  return encode_latent(g, m, g.constant(rows)).value();
}

}  // namespace

RQKMeansFit rq_kmeans_fit(const SemanticEmbeddingTable& table, std::size_t depth, std::size_t codebook_size,
                          std::size_t iters, std::uint64_t seed) {
  if (depth == 0) throw ContractViolation("rq_kmeans_fit: depth must be >= 1");
  if (codebook_size == 0 || codebook_size > table.n_items())
    throw ContractViolation("rq_kmeans_fit: codebook size " + std::to_string(codebook_size) + " must be in [1, " +
                            std::to_string(table.n_items()) + "]");
  Rng rng = make_stream(seed, "baseline/rq-kmeans");
  RQKMeansFit fit;
  std::vector<SemanticId> codes(table.n_items());
  Tensor residual = table.vectors();
  for (std::size_t l = 0; l < depth; ++l) {
    KMeansResult r = kmeans(residual, codebook_size, rng, KMeansOptions{iters, 1e-6});
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i].push_back(r.assignment[i]);
    residual = subtract_codes(residual, r.centroids, r.assignment);
    fit.level_mse.push_back(mean_squared_norm(residual));
    fit.model.codebooks.push_back(r.centroids);
    fit.levels.push_back(std::move(r));
  }
  fit.sids = to_table(table, codes);
  return fit;
}

std::vector<SemanticId> rq_kmeans_encode(const RQKMeansModel& model, const Tensor& rows) {
  std::vector<SemanticId> codes(rows.rows());
  Tensor residual = rows;
  for (const auto& book : model.codebooks) {
    const auto idx = nearest_rows(residual, book);
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i].push_back(idx[i]);
    residual = subtract_codes(residual, book, idx);
  }
  return codes;
}

nlohmann::json RQVAEConfig::to_json() const {
  return {{"depth", depth},   {"codebook_size", codebook_size}, {"hidden", hidden},
          {"beta", beta},     {"lr", lr},                       {"epochs", epochs},
          {"batch_size", batch_size}, {"seed", seed},           {"kmeans_init", kmeans_init},
          {"dead_code_reset", dead_code_reset}};
}

std::vector<ParamPtr> RQVAELiteModel::parameters() const {
  std::vector<ParamPtr> out{enc_w1, enc_b1, enc_w2, enc_b2};
  for (const auto& c : codebooks) out.push_back(c->vectors);
  out.insert(out.end(), {dec_w1, dec_b1, dec_w2, dec_b2});
  return out;
}

RQVAELiteModel make_rq_vae(std::size_t dim, const RQVAEConfig& cfg) {
  if (dim == 0 || cfg.depth == 0 || cfg.codebook_size == 0) throw ContractViolation("rq-vae: sizes must be positive");
  Rng rng = make_stream(cfg.seed, "baseline/rq-vae/init");
  const std::size_t h = cfg.hidden == 0 ? 2 * dim : cfg.hidden;
  RQVAELiteModel m;
  m.enc_w1 = dense("rqvae.enc.w1", dim, h, rng);
  m.enc_b1 = make_parameter("rqvae.enc.b1", Tensor::zeros(1, h));
  m.enc_w2 = dense("rqvae.enc.w2", h, dim, rng);
  m.enc_b2 = make_parameter("rqvae.enc.b2", Tensor::zeros(1, dim));
  for (std::size_t l = 0; l < cfg.depth; ++l)
    m.codebooks.push_back(make_codebook("rqvae.codebook" + std::to_string(l), cfg.codebook_size, dim, rng));
  m.dec_w1 = dense("rqvae.dec.w1", dim, h, rng);
  m.dec_b1 = make_parameter("rqvae.dec.b1", Tensor::zeros(1, h));
  m.dec_w2 = dense("rqvae.dec.w2", h, dim, rng);
  m.dec_b2 = make_parameter("rqvae.dec.b2", Tensor::zeros(1, dim));
  return m;
}

RQVAEPass rq_vae_forward(Graph& g, const RQVAELiteModel& m, const Tensor& rows, double beta) {
  RQVAEPass p;
  const Var x = g.constant(rows);
  p.latent = encode_latent(g, m, x);
  const double inv_n = 1.0 / static_cast<double>(rows.rows());

  Var residual = p.latent;
  Var code_sum;
  Var vq = g.constant(Tensor::scalar(0.0));
  for (std::size_t l = 0; l < m.codebooks.size(); ++l) {
    const Var book = g.param(m.codebooks[l]->vectors);
    Tensor idx_t = g.frozen([&] {
      const auto idx = nearest_rows(residual.value(), book.value());
      std::vector<double> v(idx.begin(), idx.end());
      return Tensor(1, idx.size(), std::move(v));
    }());
    std::vector<std::size_t> idx(idx_t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::size_t>(idx_t.data()[i]);
    const Var code = gather_rows(book, idx);
    vq = vq + sum_squares(stop_gradient(residual) - code) + scale(sum_squares(residual - stop_gradient(code)), beta);
    code_sum = l == 0 ? code : code_sum + code;
    residual = residual - stop_gradient(code);
    p.codes.push_back(std::move(idx));
  }
  // Straight-through: forward value is the code sum, gradient flows to the latent.
  p.quantized = stop_gradient(code_sum) + (p.latent - stop_gradient(p.latent));
  const Var h = gelu(linear(p.quantized, g.param(m.dec_w1), g.param(m.dec_b1)));
  p.recon = linear(h, g.param(m.dec_w2), g.param(m.dec_b2));
  p.recon_loss = scale(sum_squares(x - p.recon), inv_n);
  p.vq_loss = scale(vq, inv_n);
  p.total = p.recon_loss + p.vq_loss;
  return p;
}

std::vector<SemanticId> rq_vae_encode(const RQVAELiteModel& model, const Tensor& rows) {
  Graph g;
  const RQVAEPass p = rq_vae_forward(g, model, rows, 0.0);
  std::vector<SemanticId> out(rows.rows());
  for (const auto& level : p.codes)
    for (std::size_t i = 0; i < out.size(); ++i) out[i].push_back(level[i]);
  return out;
}

RQVAEResult rq_vae_lite_train(const SemanticEmbeddingTable& table, const RQVAEConfig& cfg) {
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("rq-vae: batch_size and epochs must be >= 1");
  if (cfg.codebook_size > table.n_items()) throw ConfigError("rq-vae: codebook larger than the catalog");
  RQVAEResult res{make_rq_vae(table.dim(), cfg), {}, {}, 0.0};
  RQVAELiteModel& m = res.model;
  Rng rng = make_stream(cfg.seed, "baseline/rq-vae/shuffle");

  if (cfg.kmeans_init) {
    Tensor residual = latent_of(m, table.vectors());
    for (auto& book : m.codebooks) {
      const KMeansResult r = kmeans(residual, book->size(), rng);
      book->vectors->value = r.centroids;
      residual = subtract_codes(residual, r.centroids, r.assignment);
    }
  }

  Adam adam(m.parameters(), cfg.lr);
  const std::size_t n = table.n_items(), d = table.dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto& b : m.codebooks) b->reset_usage();
    double loss_sum = 0.0;
    std::vector<std::vector<double>> recent(m.codebooks.size());
    std::size_t recent_rows = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      std::vector<double> rows;
      rows.reserve(count * d);
      for (std::size_t i = begin; i < begin + count; ++i)
        rows.insert(rows.end(), table.row(order[i]).begin(), table.row(order[i]).end());
      Graph g;
      try {
        const RQVAEPass p = rq_vae_forward(g, m, Tensor(count, d, std::move(rows)), cfg.beta);
        loss_sum += p.total.value().item() * static_cast<double>(count);
        // Residual entering each level, used to re-seed dead codes.
        Tensor residual = p.latent.value();
        for (std::size_t l = 0; l < m.codebooks.size(); ++l) {
          m.codebooks[l]->record_usage(p.codes[l]);
          recent[l] = residual.to_vector();
          residual = subtract_codes(residual, m.codebooks[l]->vectors->value, p.codes[l]);
        }
        recent_rows = count;
        adam.step(g.backward(p.total));
      } catch (const NumericError& e) {
        throw NumericError("rq-vae training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    if (cfg.dead_code_reset && epoch < cfg.epochs)
      for (std::size_t l = 0; l < m.codebooks.size(); ++l)
        dead_code_reset(*m.codebooks[l], Tensor(recent_rows, d, std::move(recent[l])), rng);
  }

  Graph g;
  const RQVAEPass p = rq_vae_forward(g, m, table.vectors(), cfg.beta);
  res.recon_mse = p.recon_loss.value().item();
  std::vector<SemanticId> codes(n);
  for (const auto& level : p.codes)
    for (std::size_t i = 0; i < n; ++i) codes[i].push_back(level[i]);
  res.sids = to_table(table, codes);
  return res;
}

SidTable random_sids(const SemanticEmbeddingTable& table, std::size_t depth, std::size_t codebook_size,
                     std::uint64_t seed) {
  if (depth == 0 || codebook_size == 0) throw ContractViolation("random_sids: sizes must be positive");
  Rng rng = make_stream(seed, "baseline/random");
  std::uniform_int_distribution<std::size_t> pick(0, codebook_size - 1);
  std::vector<SemanticId> codes(table.n_items());
  for (auto& c : codes)
    for (std::size_t l = 0; l < depth; ++l) c.push_back(pick(rng));
  return to_table(table, codes);
}

}  // namespace dos
