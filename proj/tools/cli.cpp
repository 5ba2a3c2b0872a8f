// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dos/baselines.hpp"
#include "dos/dfi.hpp"
#include "dos/embeddings.hpp"
#include "dos/error.hpp"
#include "dos/eval.hpp"
#include "dos/genrec_probe.hpp"
#include "dos/sid.hpp"
#include "dos/training.hpp"

namespace dos::cli {

namespace fs = std::filesystem;

fs::path table_file(const fs::path& dir) { return dir / "items.bin"; }
fs::path samples_file(const fs::path& dir) { return dir / "samples.jsonl"; }
fs::path hierarchy_file(const fs::path& dir) { return dir / "hierarchy.jsonl"; }

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<HierarchyLabels> load_hierarchy_if_present(const fs::path& dir, const SemanticEmbeddingTable& table) {
  const fs::path p = hierarchy_file(dir);
  return fs::exists(p) ? load_hierarchy(p, table) : std::vector<HierarchyLabels>{};
}

// SIDs reordered to the table's row order.
SidTable align_sids(const SidTable& sids, const SemanticEmbeddingTable& table) {
  if (sids.size() != table.n_items())
    throw ConfigMismatch("SID file lists " + std::to_string(sids.size()) + " items, the table has " +
                         std::to_string(table.n_items()));
  SidTable out(table.n_items());
  std::vector<bool> seen(table.n_items(), false);
  for (const auto& e : sids) {
    const std::size_t i = table.index_of(e.item_id);
    if (seen[i]) throw FormatError("SID file lists item '" + e.item_id + "' twice");
    seen[i] = true;
    out[i] = e;
  }
  return out;
}

std::size_t max_code(const SidTable& sids) {
  std::size_t m = 0;
  for (const auto& e : sids)
    for (std::size_t c : e.codes) m = std::max(m, c);
  return m;
}

struct GenDataArgs {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::size_t> items, samples, users, dim, seq_len;
  std::optional<double> noise;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  SyntheticConfig sc;
  if (a.profile == "paper") {
    sc.dim = 1024;
    sc.n_items = 20000;
    sc.n_samples = 200000;
    sc.n_users = 5000;
  } else if (a.profile != "desk") {
    throw ConfigError("unknown profile '" + a.profile + "' (expected desk or paper)");
  }
  if (a.items) sc.n_items = *a.items;
  if (a.samples) sc.n_samples = *a.samples;
  if (a.users) sc.n_users = *a.users;
  if (a.dim) sc.dim = *a.dim;
  if (a.seq_len) sc.seq_len = *a.seq_len;
  if (a.noise) sc.noise_sigma = *a.noise;

  const SyntheticData data = gen_synthetic(sc, a.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_table(data.table, table_file(dir));
  save_samples(data.samples, data.table, samples_file(dir));
  save_hierarchy(data.hierarchy, data.table, hierarchy_file(dir));
  write_json({{"profile", a.profile},
              {"seed", a.seed},
              {"n_items", sc.n_items},
              {"dim", sc.dim},
              {"n_users", sc.n_users},
              {"n_samples", sc.n_samples},
              {"seq_len", sc.seq_len},
              {"noise_sigma", sc.noise_sigma}},
             dir / "data.json");
  out << "wrote " << sc.n_items << " items and " << sc.n_samples << " samples to " << dir.string() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config, profile, data, table, samples, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_epochs, patience, batch_size, codebook_size, depth, dim, seq_len;
  std::optional<double> lr, alpha, beta;
  bool mlp_encoder = false, unshared_codebook = false, with_decoder = false, mutual_first_layer_only = false;
  bool no_kmeans_init = false, no_dead_code_reset = false;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig c = a.config.empty() ? profile_config(a.profile.empty() ? "desk" : a.profile)
                                   : TrainConfig::from_json(read_json(a.config));
  if (!a.config.empty() && !a.profile.empty() && a.profile != c.profile)
    throw ConfigError("--profile " + a.profile + " conflicts with profile '" + c.profile + "' in " + a.config);
  if (!a.data.empty()) {
    c.table_path = table_file(a.data).string();
    c.samples_path = samples_file(a.data).string();
  }
  if (!a.table.empty()) c.table_path = a.table;
  if (!a.samples.empty()) c.samples_path = a.samples;
  if (a.seed) c.seed = *a.seed;
  if (a.max_epochs) c.max_epochs = *a.max_epochs;
  if (a.patience) c.patience = *a.patience;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.codebook_size) c.model.codebook_size = *a.codebook_size;
  if (a.depth) c.model.depth = *a.depth;
  if (a.dim) c.model.dim = *a.dim;
  if (a.seq_len) c.model.seq_len = *a.seq_len;
  if (a.lr) c.lr = *a.lr;
  if (a.alpha) c.alpha = *a.alpha;
  if (a.beta) c.beta = *a.beta;
  if (a.mlp_encoder) c.model.mlp_encoder = true;
  if (a.unshared_codebook) c.model.unshared_codebook = true;
  if (a.with_decoder) c.model.with_decoder = true;
  if (a.mutual_first_layer_only) c.model.mutual_first_layer_only = true;
  if (a.no_kmeans_init) c.kmeans_init = false;
  if (a.no_dead_code_reset) c.dead_code_reset = false;
  if (c.table_path.empty() || c.samples_path.empty())
    throw ConfigError("no training data: pass --data DIR or set table_path and samples_path");
  c.validate();
  return c;
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a);
  const SemanticEmbeddingTable table = load_table(cfg.table_path);
  const auto samples = load_samples(cfg.samples_path, table);
  const DataSplits splits = split_dataset(samples, cfg.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_json(cfg.to_json(), dir / "config.json");

  const TrainResult res = train(cfg, table, splits, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "  loss " << r.train.total << "  val_auc " << r.val_auc << "  val_f1 " << r.val_f1
        << '\n';
  });
  save_checkpoint(res.best, dir / "checkpoint.bin");
  write_metrics_csv(res.history, dir / "metrics.csv");
  out << "best epoch " << res.best_epoch << " of " << res.stopped_epoch << ", val_auc "
      << res.history.at(res.best_epoch - 1).val_auc << "; checkpoint " << (dir / "checkpoint.bin").string() << '\n';
  return kOk;
}

struct ExportArgs {
  std::string checkpoint, table, data, out;
};

SemanticEmbeddingTable table_from(const std::string& table, const std::string& data) {
  if (!table.empty()) return load_table(table);
  if (!data.empty()) return load_table(table_file(data));
  throw ConfigError("pass --table FILE or --data DIR");
}

int export_cmd(const ExportArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const DfiModel model = restore_model(ckpt);
  const SemanticEmbeddingTable table = table_from(a.table, a.data);
  const SidTable sids = export_item_sids(model, table);
  write_sids_tsv(sids, a.out);
  out << "wrote " << sids.size() << " SIDs to " << a.out << '\n';
  return kOk;
}

struct BaselineArgs {
  std::string table, data, out;
  std::size_t depth = 3, codebook_size = 64, iters = 50, epochs = 60, batch_size = 128;
  double lr = 1e-3, beta = 0.25;
  std::uint64_t seed = 0;
};

int rq_kmeans_cmd(const BaselineArgs& a, std::ostream& out) {
  const SemanticEmbeddingTable table = table_from(a.table, a.data);
  const RQKMeansFit fit = rq_kmeans_fit(table, a.depth, a.codebook_size, a.iters, a.seed);
  write_sids_tsv(fit.sids, a.out);
  out << "rq-kmeans residual mse per level:";
  for (double m : fit.level_mse) out << ' ' << m;
  out << "\nwrote " << fit.sids.size() << " SIDs to " << a.out << '\n';
  return kOk;
}

int rq_vae_cmd(const BaselineArgs& a, std::ostream& out) {
  const SemanticEmbeddingTable table = table_from(a.table, a.data);
  RQVAEConfig cfg;
  cfg.depth = a.depth;
  cfg.codebook_size = a.codebook_size;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr = a.lr;
  cfg.beta = a.beta;
  cfg.seed = a.seed;
  const RQVAEResult res = rq_vae_lite_train(table, cfg);
  write_sids_tsv(res.sids, a.out);
  out << "rq-vae reconstruction mse " << res.recon_mse << "\nwrote " << res.sids.size() << " SIDs to " << a.out
      << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, sids, data, out, name;
  std::optional<std::size_t> codebook_size;
  std::uint64_t seed = 0;
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() && a.sids.empty()) throw ConfigError("eval needs --checkpoint or --sids");
  const SemanticEmbeddingTable table = load_table(table_file(a.data));
  const auto labels = load_hierarchy_if_present(a.data, table);

  MetricReport report;
  SidTable sids;
  std::size_t k = 0;
  nlohmann::json meta = {{"data", a.data}};
  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const DfiModel model = restore_model(ckpt);
    const auto samples = load_samples(samples_file(a.data), table);
    const DataSplits splits = split_dataset(samples, ckpt.config.seed);
    const auto scores = predict_scores(model, table, splits.test);
    std::vector<int> y;
    for (const auto& s : splits.test) y.push_back(s.label);
    sids = export_item_sids(model, table);
    k = ckpt.config.model.codebook_size;
    const MetricReport sr = sid_report(sids, k, labels.empty() ? nullptr : &labels);
    report = sr;
    report.auc = auc(scores, y);
    report.f1 = f1(scores, y);
    meta["checkpoint"] = a.checkpoint;
    meta["best_epoch"] = ckpt.epoch;
    meta["split_seed"] = ckpt.config.seed;
  } else {
    sids = align_sids(read_sids_tsv(a.sids), table);
    k = a.codebook_size ? *a.codebook_size : max_code(sids) + 1;
    report = sid_report(sids, k, labels.empty() ? nullptr : &labels);
    meta["sids"] = a.sids;
  }
  if (!a.name.empty()) meta["name"] = a.name;
  report.metadata = meta;
  write_json(report.to_json(), a.out);
  out << format_reports({{a.name.empty() ? "model" : a.name, report}});
  return kOk;
}

struct ProbeArgs {
  std::string sids, data, out, name = "scheme";
  std::uint64_t seed = 0;
  ProbeConfig probe;
  std::optional<std::size_t> codebook_size;
};

int probe_cmd(const ProbeArgs& a, std::ostream& out) {
  const SemanticEmbeddingTable table = load_table(table_file(a.data));
  const auto samples = load_samples(samples_file(a.data), table);
  const SidTable sids = align_sids(read_sids_tsv(a.sids), table);
  const std::size_t k = a.codebook_size ? *a.codebook_size : max_code(sids) + 1;
  const DataSplits splits = split_dataset(samples, a.seed);
  const auto train_ds = build_sid_dataset(splits.train, sids, k);
  const auto val_ds = build_sid_dataset(splits.val, sids, k);
  const auto test_ds = build_sid_dataset(splits.test, sids, k);
  const ProbeTrainResult res = probe_train(train_ds, val_ds, a.probe);
  const double hit = probe_eval(res.model, test_ds, sids, a.probe);
  write_json(probe_report({{a.name, hit}}), a.out);
  out << a.name << " Hit@" << a.probe.k << " " << hit << " (val loss " << res.val_loss.front() << " -> "
      << res.val_loss.back() << ")\n";
  return kOk;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int report_cmd(const ReportArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, MetricReport>> rows;
  auto row_for = [&](const std::string& name) -> MetricReport& {
    for (auto& [n, r] : rows)
      if (n == name) return r;
    rows.emplace_back(name, MetricReport{});
    return rows.back().second;
  };
  for (const auto& spec : a.inputs) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const nlohmann::json j = read_json(path);
    if (!j.is_object()) throw FormatError(path + " is not a report object");
    const bool is_probe =
        !j.empty() && std::all_of(j.begin(), j.end(), [](const nlohmann::json& v) { return v.is_number(); });
    if (is_probe) {
      for (const auto& [scheme, v] : j.items()) {
        const std::string name = eq == std::string::npos ? scheme : spec.substr(0, eq);
        row_for(name).hit_at_k[10] = v.get<double>();
      }
      continue;
    }
    std::string name = fs::path(path).stem().string();
    if (eq != std::string::npos) name = spec.substr(0, eq);
    else if (j.contains("metadata") && j["metadata"].contains("name")) name = j["metadata"]["name"].get<std::string>();
    MetricReport r = MetricReport::from_json(j);
    MetricReport& dst = row_for(name);
    const auto hits = dst.hit_at_k;
    dst = r;
    for (const auto& [kk, v] : hits) dst.hit_at_k[kk] = v;
  }
  const std::string table = format_reports(rows);
  out << table;
  if (!a.out.empty()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, r] : rows) j[name] = r.to_json();
    write_json(j, a.out);
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-flow orthogonal semantic IDs: data generation, training, quantization and evaluation"};
  app.name("dos-sid");
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic hierarchical corpus");
  gen->add_option("--profile", gd.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  gen->add_option("--seed", gd.seed, "Random seed");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--items", gd.items, "Catalog size");
  gen->add_option("--samples", gd.samples, "Number of interaction samples");
  gen->add_option("--users", gd.users, "Number of users");
  gen->add_option("--dim", gd.dim, "Embedding width");
  gen->add_option("--seq-len", gd.seq_len, "History length");
  gen->add_option("--noise", gd.noise, "Item noise standard deviation");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the dual-flow model");
  tr->add_option("--config", ta.config, "JSON config file")->check(CLI::ExistingFile);
  tr->add_option("--profile", ta.profile, "desk or paper defaults")->check(CLI::IsMember({"desk", "paper"}));
  tr->add_option("--data", ta.data, "Directory written by gen-data");
  tr->add_option("--table", ta.table, "Embedding table file");
  tr->add_option("--samples", ta.samples, "Samples JSONL file");
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--seed", ta.seed, "Seed for init, codebooks and shuffling");
  tr->add_option("--max-epochs", ta.max_epochs);
  tr->add_option("--patience", ta.patience);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--codebook-size", ta.codebook_size);
  tr->add_option("--depth", ta.depth, "Quantization levels");
  tr->add_option("--dim", ta.dim);
  tr->add_option("--seq-len", ta.seq_len);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--alpha", ta.alpha, "Weight of the orthogonality and mutual-information terms");
  tr->add_option("--beta", ta.beta, "Commitment weight");
  tr->add_flag("--mlp-encoder", ta.mlp_encoder, "Replace the transformer encoders by perceptrons");
  tr->add_flag("--unshared-codebook", ta.unshared_codebook, "Give each tower its own codebooks");
  tr->add_flag("--with-decoder", ta.with_decoder, "Reconstruct with a learned decoder");
  tr->add_flag("--mutual-first-layer-only", ta.mutual_first_layer_only);
  tr->add_flag("--no-kmeans-init", ta.no_kmeans_init);
  tr->add_flag("--no-dead-code-reset", ta.no_dead_code_reset);

  ExportArgs ea;
  auto* ex = app.add_subcommand("export-sids", "Write item SIDs from a checkpoint");
  ex->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  ex->add_option("--table", ea.table, "Embedding table file");
  ex->add_option("--data", ea.data, "Directory written by gen-data");
  ex->add_option("--out", ea.out, "Output TSV")->required();

  BaselineArgs ba;
  auto* base = app.add_subcommand("baseline", "Fit a reference quantizer");
  base->require_subcommand(1);
  auto* rqk = base->add_subcommand("rq-kmeans", "Residual k-means");
  auto* rqv = base->add_subcommand("rq-vae", "Residual VQ autoencoder");
  for (auto* sc : {rqk, rqv}) {
    sc->add_option("--table", ba.table, "Embedding table file");
    sc->add_option("--data", ba.data, "Directory written by gen-data");
    sc->add_option("--out", ba.out, "Output TSV")->required();
    sc->add_option("--depth", ba.depth);
    sc->add_option("--codebook-size", ba.codebook_size);
    sc->add_option("--seed", ba.seed);
  }
  rqk->add_option("--iters", ba.iters, "Lloyd iteration cap");
  rqv->add_option("--epochs", ba.epochs);
  rqv->add_option("--batch-size", ba.batch_size);
  rqv->add_option("--lr", ba.lr);
  rqv->add_option("--beta", ba.beta);

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Compute a metric report");
  ev->add_option("--checkpoint", va.checkpoint)->check(CLI::ExistingFile);
  ev->add_option("--sids", va.sids, "SID TSV, instead of a checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--data", va.data, "Directory written by gen-data")->required();
  ev->add_option("--out", va.out, "Report JSON")->required();
  ev->add_option("--name", va.name, "Row label");
  ev->add_option("--codebook-size", va.codebook_size);

  ProbeArgs pa;
  auto* pr = app.add_subcommand("probe", "Train and score the next-SID probe");
  pr->add_option("--sids", pa.sids)->required()->check(CLI::ExistingFile);
  pr->add_option("--data", pa.data, "Directory written by gen-data")->required();
  pr->add_option("--out", pa.out, "Report JSON")->required();
  pr->add_option("--name", pa.name, "Scheme name in the report");
  pr->add_option("--seed", pa.seed, "Split seed; match the training run");
  pr->add_option("--probe-seed", pa.probe.seed);
  pr->add_option("--epochs", pa.probe.epochs);
  pr->add_option("--lr", pa.probe.lr);
  pr->add_option("--beam", pa.probe.beam);
  pr->add_option("--codebook-size", pa.codebook_size);

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Combine reports into one table");
  rep->add_option("inputs", ra.inputs, "[name=]report.json")->required();
  rep->add_option("--out", ra.out, "Combined JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(gd, out);
    if (*tr) return train_cmd(ta, out);
    if (*ex) return export_cmd(ea, out);
    if (*rqk) return rq_kmeans_cmd(ba, out);
    if (*rqv) return rq_vae_cmd(ba, out);
    if (*ev) return eval_cmd(va, out);
    if (*pr) return probe_cmd(pa, out);
    if (*rep) return report_cmd(ra, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace dos::cli
