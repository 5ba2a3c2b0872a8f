// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/genrec_probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dos/error.hpp"
#include "dos/ops.hpp"
#include "dos/random.hpp"
#include "dos/training.hpp"

namespace dos {
namespace {

struct LevelRows {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> codes;
};

// Teacher-forcing targets grouped by the level of the predicted token.
std::vector<LevelRows> next_token_targets(std::span<const std::vector<std::size_t>> streams, std::size_t depth,
                                          std::size_t codebook_size) {
  std::vector<LevelRows> out(depth);
  const std::size_t t = streams.front().size() - 1;
  for (std::size_t b = 0; b < streams.size(); ++b) {
    for (std::size_t p = 0; p < t; ++p) {
      const std::size_t level = (p + 1) % depth;
      out[level].rows.push_back(b * t + p);
      out[level].codes.push_back(streams[b][p + 1] - level * codebook_size);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> inputs_of(std::span<const std::vector<std::size_t>> streams) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(streams.size());
  for (const auto& s : streams) out.emplace_back(s.begin(), s.end() - 1);
  return out;
}

Var head_logits(Graph& g, const ProbeModel& m, Var hidden, std::size_t level) {
  return linear(hidden, g.param(m.head_w[level]), g.param(m.head_b[level]));
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

}  // namespace

std::size_t sid_token(std::size_t level, std::size_t code, std::size_t codebook_size) {
  if (code >= codebook_size) throw ContractViolation("sid_token: code " + std::to_string(code) + " >= K");
  return code + level * codebook_size;
}

SidSequenceDataset build_sid_dataset(std::span<const InteractionSample> samples, const SidTable& sids,
                                     std::size_t codebook_size) {
  if (sids.empty()) throw ContractViolation("build_sid_dataset: empty SID table");
  SidSequenceDataset ds;
  ds.depth = sids.front().codes.size();
  ds.codebook_size = codebook_size;
  auto append = [&](std::vector<std::size_t>& stream, std::size_t item) {
    if (item >= sids.size())
      throw ContractViolation("build_sid_dataset: item row " + std::to_string(item) + " has no SID");
    const auto& codes = sids[item].codes;
    if (codes.size() != ds.depth) throw ContractViolation("build_sid_dataset: SIDs differ in depth");
    for (std::size_t l = 0; l < ds.depth; ++l) stream.push_back(sid_token(l, codes[l], codebook_size));
  };
  for (const auto& s : samples) {
    if (s.label != 1) continue;
    if (ds.streams.empty()) ds.history_len = s.seq.size();
    if (s.seq.size() != ds.history_len) throw ContractViolation("build_sid_dataset: histories differ in length");
    std::vector<std::size_t> stream;
    stream.reserve(ds.stream_len());
    for (std::size_t item : s.seq) append(stream, item);
    append(stream, s.target);
    ds.streams.push_back(std::move(stream));
    ds.targets.push_back(s.target);
  }
  return ds;
}

nlohmann::json ProbeConfig::to_json() const {
  return {{"dim", dim}, {"layers", layers}, {"heads", heads},           {"ffn_hidden", ffn_hidden},
          {"lr", lr},   {"epochs", epochs}, {"batch_size", batch_size}, {"beam", beam},
          {"k", k},     {"seed", seed}};
}

std::vector<ParamPtr> ProbeModel::parameters() const {
  std::vector<ParamPtr> out{tokens, pos};
  for (const auto& b : blocks) {
    const auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  out.push_back(norm_gain);
  out.push_back(norm_bias);
  for (std::size_t l = 0; l < head_w.size(); ++l) {
    out.push_back(head_w[l]);
    out.push_back(head_b[l]);
  }
  return out;
}

ProbeModel make_probe(std::size_t depth, std::size_t codebook_size, std::size_t max_len, const ProbeConfig& cfg) {
  if (depth == 0 || codebook_size == 0 || max_len == 0 || cfg.dim == 0)
    throw ContractViolation("probe sizes must be positive");
  Rng rng = make_stream(cfg.seed, "probe/init");
  const std::size_t d = cfg.dim;
  ProbeModel m;
  m.depth = depth;
  m.codebook_size = codebook_size;
  m.tokens = make_parameter("probe.tokens", normal_tensor(depth * codebook_size, d, 0.1, rng));
  m.pos = make_parameter("probe.pos", normal_tensor(max_len, d, 0.02, rng));
  for (std::size_t i = 0; i < cfg.layers; ++i)
    m.blocks.push_back(make_transformer_encoder("probe.block" + std::to_string(i), d, 0, cfg.heads,
                                                cfg.ffn_hidden == 0 ? 2 * d : cfg.ffn_hidden, rng));
  m.norm_gain = make_parameter("probe.norm.gain", Tensor::filled(1, d, 1.0));
  m.norm_bias = make_parameter("probe.norm.bias", Tensor::zeros(1, d));
  for (std::size_t l = 0; l < depth; ++l) {
    m.head_w.push_back(make_parameter("probe.head" + std::to_string(l) + ".w",
                                      normal_tensor(d, codebook_size, 1.0 / std::sqrt(static_cast<double>(d)), rng)));
    m.head_b.push_back(make_parameter("probe.head" + std::to_string(l) + ".b", Tensor::zeros(1, codebook_size)));
  }
  return m;
}

Var probe_hidden(Graph& g, const ProbeModel& m, const std::vector<std::vector<std::size_t>>& streams) {
  if (streams.empty() || streams.front().empty()) throw ContractViolation("probe: empty streams");
  const std::size_t t = streams.front().size();
  if (t > m.pos->value.rows())
    throw ContractViolation("probe: stream of " + std::to_string(t) + " tokens exceeds positional table");
  std::vector<std::size_t> flat;
  flat.reserve(streams.size() * t);
  for (const auto& s : streams) {
    if (s.size() != t) throw ContractViolation("probe: streams differ in length");
    for (std::size_t tok : s) {
      if (tok >= m.tokens->value.rows()) throw ContractViolation("probe: token " + std::to_string(tok) + " outside vocabulary");
      flat.push_back(tok);
    }
  }
  Var h = gather_rows(g.param(m.tokens), flat) + tile_rows(slice_rows(g.param(m.pos), 0, t), streams.size());
  for (const auto& b : m.blocks) h = transformer_block(g, b, h, t, true);
  return add_row(mul_row(layer_norm_rows(h), g.param(m.norm_gain)), g.param(m.norm_bias));
}

Tensor probe_next_logits(const ProbeModel& m, const std::vector<std::vector<std::size_t>>& prefixes) {
  Graph g;
  const Var h = probe_hidden(g, m, prefixes);
  const std::size_t t = prefixes.front().size();
  std::vector<std::size_t> last(prefixes.size());
  for (std::size_t b = 0; b < last.size(); ++b) last[b] = b * t + t - 1;
  return head_logits(g, m, gather_rows(h, last), t % m.depth).value();
}

Var probe_loss(Graph& g, const ProbeModel& m, std::span<const std::vector<std::size_t>> streams) {
  if (streams.empty() || streams.front().size() < 2) throw ContractViolation("probe_loss: streams too short");
  const Var h = probe_hidden(g, m, inputs_of(streams));
  const auto targets = next_token_targets(streams, m.depth, m.codebook_size);
  Var total = g.constant(Tensor::scalar(0.0));
  std::size_t count = 0;
  for (std::size_t l = 0; l < m.depth; ++l) {
    if (targets[l].rows.empty()) continue;
    total = total + softmax_cross_entropy_sum(head_logits(g, m, gather_rows(h, targets[l].rows), l), targets[l].codes);
    count += targets[l].rows.size();
  }
  return scale(total, 1.0 / static_cast<double>(count));
}

double probe_dataset_loss(const ProbeModel& m, const SidSequenceDataset& data, std::size_t batch) {
  if (data.size() == 0) throw ContractViolation("probe_dataset_loss: empty dataset");
  double sum = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const std::size_t n = std::min(batch, data.size() - begin);
    Graph g;
    sum += probe_loss(g, m, std::span(data.streams).subspan(begin, n)).value().item() * static_cast<double>(n);
  }
  return sum / static_cast<double>(data.size());
}

ProbeTrainResult probe_train(const SidSequenceDataset& train, const SidSequenceDataset& val, const ProbeConfig& cfg) {
  if (train.size() == 0 || val.size() == 0) throw ContractViolation("probe_train: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("probe batch_size must be >= 1");
  ProbeTrainResult res{make_probe(train.depth, train.codebook_size, train.stream_len(), cfg), {}, {}};
  Adam adam(res.model.parameters(), cfg.lr);
  Rng rng = make_stream(cfg.seed, "probe/shuffle");
  res.val_loss.push_back(probe_dataset_loss(res.model, val));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - begin);
      std::vector<std::vector<std::size_t>> batch;
      batch.reserve(n);
      for (std::size_t i = begin; i < begin + n; ++i) batch.push_back(train.streams[order[i]]);
      Graph g;
      try {
        const Var loss = probe_loss(g, res.model, batch);
        sum += loss.value().item() * static_cast<double>(n);
        adam.step(g.backward(loss));
      } catch (const NumericError& e) {
        throw NumericError("probe training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }
    res.train_loss.push_back(sum / static_cast<double>(order.size()));
    res.val_loss.push_back(probe_dataset_loss(res.model, val));
  }
  return res;
}

double next_token_accuracy(const ProbeModel& m, const SidSequenceDataset& data) {
  std::size_t hits = 0, total = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += 256) {
    const std::size_t n = std::min<std::size_t>(256, data.size() - begin);
    const auto streams = std::span(data.streams).subspan(begin, n);
    Graph g;
    const Var h = probe_hidden(g, m, inputs_of(streams));
    const auto targets = next_token_targets(streams, m.depth, m.codebook_size);
    for (std::size_t l = 0; l < m.depth; ++l) {
      if (targets[l].rows.empty()) continue;
      const Tensor logits = head_logits(g, m, gather_rows(h, targets[l].rows), l).value();
      for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row_span(r);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        hits += best == targets[l].codes[r] ? 1 : 0;
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<Beam> beam_search(const BeamStep& step, std::size_t depth, std::size_t width) {
  if (width == 0) throw ContractViolation("beam_search: width must be >= 1");
  std::vector<Beam> beams{Beam{}};
  for (std::size_t level = 0; level < depth; ++level) {
    std::vector<std::vector<std::size_t>> prefixes;
    prefixes.reserve(beams.size());
    for (const auto& b : beams) prefixes.push_back(b.codes);
    const auto lp = step(prefixes);
    if (lp.size() != beams.size()) throw ContractViolation("beam_search: step returned the wrong number of rows");
    std::vector<Beam> next;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      for (std::size_t c = 0; c < lp[b].size(); ++c) {
        Beam e{beams[b].codes, beams[b].log_prob + lp[b][c]};
        e.codes.push_back(c);
        next.push_back(std::move(e));
      }
    }
    const std::size_t keep = std::min(width, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end(),
                      [](const Beam& a, const Beam& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return a.codes < b.codes;
                      });
    next.resize(keep);
    beams = std::move(next);
  }
  return beams;
}

double probe_eval(const ProbeModel& m, const SidSequenceDataset& test, const SidTable& sids, const ProbeConfig& cfg) {
  if (test.size() == 0) throw ContractViolation("probe_eval: empty test set");
  const std::size_t hist = test.history_len * test.depth;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::vector<std::size_t> history(test.streams[i].begin(), test.streams[i].begin() + static_cast<std::ptrdiff_t>(hist));
    const BeamStep step = [&](const std::vector<std::vector<std::size_t>>& prefixes) {
      std::vector<std::vector<std::size_t>> streams;
      streams.reserve(prefixes.size());
      for (const auto& p : prefixes) {
        auto s = history;
        for (std::size_t l = 0; l < p.size(); ++l) s.push_back(sid_token(l, p[l], m.codebook_size));
        streams.push_back(std::move(s));
      }
      const Tensor logits = probe_next_logits(m, streams);
      std::vector<std::vector<double>> out;
      for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(log_softmax(logits.row_span(r)));
      return out;
    };
    const auto beams = beam_search(step, m.depth, cfg.beam);
    const SemanticId& target = sids.at(test.targets[i]).codes;
    const std::size_t limit = std::min(cfg.k, beams.size());
    for (std::size_t b = 0; b < limit; ++b)
      if (beams[b].codes == target) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

nlohmann::json probe_report(const std::map<std::string, double>& hits) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, v] : hits) j[name] = v;
  return j;
}

}  // namespace dos
