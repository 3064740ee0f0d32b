#pragma once

// Command-line front end. `run_cli` is the whole program; tools/fusenet.cpp
// only forwards argv to it.
//
// Exit codes: 0 ok, 1 internal error, 2 config, 3 data, 4 training,
// 5 transport, 6 filesystem write failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fusenet/checkpoint.hpp"
#include "fusenet/config.hpp"
#include "fusenet/error.hpp"
#include "fusenet/report.hpp"
#include "fusenet/synthgen.hpp"
#include "fusenet/text_embed.hpp"
#include "fusenet/train.hpp"

namespace fusenet::cli {

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::training: return 4;
    case ErrorCategory::transport: return 5;
    case ErrorCategory::io: return 6;
    case ErrorCategory::dimension:
    case ErrorCategory::contract: return 1;
  }
  return 1;
}

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string provider;
  std::string checkpoint;
};

inline std::string file_hash(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read back '" + p.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return detail::hex64(fnv1a64(bytes));
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

class Runner {
 public:
  Runner(const GlobalOptions& opts, std::ostream& out, std::ostream& err) : opts_(opts), out_(out), err_(err) {
    cfg_ = opts.config.empty() ? RunConfig{} : load_run_config(opts.config);
    if (!opts.out.empty()) cfg_.out = opts.out;
    if (opts.seed) cfg_.seed = *opts.seed;
    if (!opts.provider.empty()) cfg_.provider.kind = parse_provider_kind(opts.provider);
    if (const char* url = std::getenv("FUSENET_EMBED_URL"); url && *url) cfg_.provider.endpoint = url;
    cfg_.dims.d_text = cfg_.provider.dim;
  }

  const RunConfig& config() const { return cfg_; }

  int generate() {
    const SynthConfig sc = cfg_.seeded_synth();
    const SynthDataset ds = fusenet::generate(sc);
    ensure_dir(cfg_.out);
    const std::vector<std::string> names = {"edges.tsv", "labels.tsv", "texts.jsonl"};
    write_graph(cfg_.out / names[0], ds.graph);
    write_labels(cfg_.out / names[1], ds.graph, ds.labels);
    write_texts(cfg_.out / names[2], ds.graph, ds.corpus);

    nlohmann::json files = nlohmann::json::array();
    for (const auto& n : names) {
      const auto p = cfg_.out / n;
      files.push_back({{"name", n}, {"bytes", std::filesystem::file_size(p)}, {"fnv1a64", file_hash(p)}});
    }
    const auto summary = to_json(describe(ds));
    write_json(cfg_.out / "manifest.json",
               {{"seed", cfg_.seed}, {"synth", to_json(sc)}, {"files", files}, {"summary", summary}});

    // A run config next to the data, so the other commands can use it directly.
    RunConfig next = cfg_;
    next.data = {names[0], names[1], names[2], {}};
    next.out = ".";
    write_json(cfg_.out / "run.json", to_json(next));

    const auto s = describe(ds);
    out_ << "generated " << s.num_nodes << " nodes, " << s.num_edges << " edges, " << s.positives
         << " positive labels (prevalence " << s.prevalence << ")\n"
         << "lexicon rate: positive " << s.lexicon_rate_positive << ", negative " << s.lexicon_rate_negative << "\n"
         << "wrote " << (cfg_.out / "manifest.json").string() << "\n";
    return 0;
  }

  int embed() {
    const Dataset ds = load_dataset(cfg_, true);
    ensure_dir(cfg_.out);
    const auto path = cfg_.out / "embeddings.jsonl";
    write_embeddings(path, ds.graph, *ds.embeddings);
    out_ << "embedded " << ds.embeddings->num_rows() << " nodes at dim " << ds.embeddings->dim << " via "
         << ds.embeddings->source << "\nwrote " << path.string() << "\n";
    return 0;
  }

  int train_cmd() {
    const Dataset ds = load_dataset(cfg_, uses_text(cfg_.variant));
    const auto ctx = context_for(ds);
    const auto split = split_nodes(ds.labels, cfg_.split, cfg_.split_seed());
    const auto dims = dims_for(cfg_, ds);
    const TrainConfig tc = cfg_.seeded_train();
    auto result = train(cfg_.variant, ctx, ds.labels, split, dims, tc);

    ensure_dir(cfg_.out);
    const auto ckpt = checkpoint_path();
    save_checkpoint(ckpt, result.model, config_hash(cfg_));
    auto rep = to_json(result);
    write_json(cfg_.out / "train_report.json", {{"kind", "train"},
                                                 {"seed", cfg_.seed},
                                                 {"config", to_json(cfg_)},
                                                 {"config_hash", config_hash(cfg_)},
                                                 {"checkpoint", ckpt.filename().string()},
                                                 {"result", rep},
                                                 {"generated_at", utc_timestamp()}});
    Report table{"train", cfg_.seed, {}, {}};
    table.rows.push_back({cfg_.variant, std::move(result)});
    out_ << format_table(table) << "wrote " << ckpt.string() << "\n";
    return 0;
  }

  int eval_cmd() {
    const auto ckpt_path = checkpoint_path();
    const Checkpoint ck = load_checkpoint(ckpt_path);
    if (ck.config_hash != config_hash(cfg_)) {
      err_ << "warning: checkpoint was trained under config " << ck.config_hash << ", current config is "
                << config_hash(cfg_) << "\n";
    }
    const Dataset ds = load_dataset(cfg_, uses_text(ck.model.variant));
    if (ck.model.dims.num_nodes != ds.graph.num_nodes()) {
      throw DataError("checkpoint covers " + std::to_string(ck.model.dims.num_nodes) + " nodes, graph has " +
                      std::to_string(ds.graph.num_nodes()));
    }
    const auto ctx = context_for(ds);
    const auto split = split_nodes(ds.labels, cfg_.split, cfg_.split_seed());
    const double thr = cfg_.train.threshold;
    const auto pred = forward(ck.model.variant, ctx, ck.model.params, ck.model.dims, thr);
    const auto m_train = compute_metrics(pred.labels, ds.labels, split.train);
    const auto m_val = compute_metrics(pred.labels, ds.labels, split.val);
    const auto m_test = compute_metrics(pred.labels, ds.labels, split.test);

    ensure_dir(cfg_.out);
    write_json(cfg_.out / "eval_report.json", {{"kind", "eval"},
                                                {"seed", cfg_.seed},
                                                {"variant", variant_name(ck.model.variant)},
                                                {"checkpoint", ckpt_path.string()},
                                                {"checkpoint_config_hash", ck.config_hash},
                                                {"train", to_json(m_train)},
                                                {"val", to_json(m_val)},
                                                {"test", to_json(m_test)},
                                                {"generated_at", utc_timestamp()}});
    out_ << variant_name(ck.model.variant) << " test F1 " << m_test.f1 << " (precision " << m_test.precision
         << ", recall " << m_test.recall << ")\n";
    return 0;
  }

  int bench(bool ablation) {
    const Dataset ds = load_dataset(cfg_, true);
    const auto ctx = context_for(ds);
    const auto split = split_nodes(ds.labels, cfg_.split, cfg_.split_seed());
    const auto dims = dims_for(cfg_, ds);
    const TrainConfig tc = cfg_.seeded_train();
    const Report rep = ablation ? run_ablation(ctx, ds.labels, split, dims, tc, to_json(cfg_))
                                : run_bench(ctx, ds.labels, split, dims, tc, to_json(cfg_));
    ensure_dir(cfg_.out);
    const std::string stem = ablation ? "ablation" : "bench";
    const std::string table = format_table(rep);
    write_json(cfg_.out / (stem + ".json"), to_json(rep, utc_timestamp()));
    write_text(cfg_.out / (stem + ".txt"), table);
    out_ << table;
    return 0;
  }

 private:
  std::filesystem::path checkpoint_path() const {
    return opts_.checkpoint.empty() ? cfg_.out / "model.ckpt" : std::filesystem::path(opts_.checkpoint);
  }

  GlobalOptions opts_;
  std::ostream& out_;
  std::ostream& err_;
  RunConfig cfg_;
};

/// Runs the CLI; diagnostics go to `err` as "error: <category>: <message>".
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"fusenet: graph attention + text fusion for node risk prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions opts;
  std::uint64_t seed = 0;
  app.add_option("--config", opts.config, "run configuration (JSON)");
  app.add_option("--out", opts.out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "seed (overrides the config)");
  app.add_option("--provider", opts.provider, "embedding provider")
      ->check(CLI::IsMember({"precomputed", "hashing", "remote"}));

  auto* gen = app.add_subcommand("generate", "write a synthetic planted-signal dataset");
  auto* emb = app.add_subcommand("embed", "compute node text embeddings");
  auto* trn = app.add_subcommand("train", "train one model variant and save a checkpoint");
  auto* evl = app.add_subcommand("eval", "evaluate a saved checkpoint");
  evl->add_option("--checkpoint", opts.checkpoint, "checkpoint file (default <out>/model.ckpt)");
  auto* bch = app.add_subcommand("bench", "compare baselines against the fused model");
  auto* abl = app.add_subcommand("ablate", "drop one modality at a time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return 2;
  }
  if (*seed_opt) opts.seed = seed;

  try {
    Runner runner(opts, out, err);
    if (gen->parsed()) return runner.generate();
    if (emb->parsed()) return runner.embed();
    if (trn->parsed()) return runner.train_cmd();
    if (evl->parsed()) return runner.eval_cmd();
    if (bch->parsed()) return runner.bench(false);
    if (abl->parsed()) return runner.bench(true);
    return 2;
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fusenet::cli
