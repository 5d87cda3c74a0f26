// msb: command-line driver for the document-quality pipeline.
//
// Verbs: prep-vis, embed, stats, filter-leakage, train, evaluate, baseline,
// report. Every verb takes --config plus repeatable --set overrides.
//
// Exit codes: 0 success, 1 unexpected failure, 2 config/schema violation,
// 3 missing or unreadable input, 4 training divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "msb/checkpoint.hpp"
#include "msb/config.hpp"
#include "msb/corpus.hpp"
#include "msb/leakage.hpp"
#include "msb/metrics.hpp"
#include "msb/models.hpp"
#include "msb/textpipe.hpp"
#include "msb/training.hpp"
#include "msb/vispipe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msb;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--set", opts.overrides, "dotted-path override, key=value (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "base RNG seed (overrides config)");
  cmd->add_option("--repeats", opts.repeats, "number of repeated runs (overrides config)");
  cmd->add_flag("--deterministic", opts.deterministic, "record single-threaded deterministic mode");
}

config::ExperimentConfig resolve(const CommonOpts& opts) {
  config::ExperimentConfig cfg = config::load_config(opts.config_path, opts.overrides);
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.repeats) {
    if (*opts.repeats < 1) throw ParseError("--repeats must be >= 1");
    cfg.run.repeats = *opts.repeats;
  }
  return cfg;
}

std::vector<corpus::DocumentRecord> load_records(const config::ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ParseError("config: dataset.manifest is required");
  return corpus::load_manifest(cfg.manifest);
}

void write_json(const fs::path& path, const json& doc) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json run_record(const config::ExperimentConfig& cfg, const CommonOpts& opts) {
  json rec;
  rec["config_hash"] = config::config_hash(cfg.raw);
  rec["manifest"] = cfg.manifest;
  rec["seed"] = cfg.run.seed;
  rec["repeats"] = cfg.run.repeats;
  rec["deterministic"] = opts.deterministic;
  return rec;
}

// ---------------------------------------------------------------------------
// Example assembly

bool model_needs_text(const std::string& kind) { return kind != "visual"; }
bool model_needs_visual(const std::string& kind) {
  return kind == "visual" || kind == "multischubert";
}

std::map<std::string, models::Mat> text_embeddings(const config::ExperimentConfig& cfg,
                                                   const std::vector<corpus::DocumentRecord>& recs) {
  std::map<std::string, models::Mat> by_doc;
  if (!cfg.cache_path.empty() && fs::exists(cfg.cache_path)) {
    for (auto& seq : textpipe::read_cache(cfg.cache_path)) {
      if (seq.dimension() != cfg.encoder_dim) {
        throw IntegrityError("cache dimension " + std::to_string(seq.dimension()) +
                             " does not match encoder.dimension " +
                             std::to_string(cfg.encoder_dim));
      }
      by_doc[seq.doc_id] = std::move(seq.vectors);
    }
    return by_doc;
  }
  auto encoder = textpipe::make_encoder(cfg.encoder_name, cfg.encoder_dim);
  for (const auto& rec : recs) {
    by_doc[rec.doc_id] = textpipe::encode_document(rec, *encoder, cfg.chunker).vectors;
  }
  return by_doc;
}

models::FeatureMap load_grid_features(const config::ExperimentConfig& cfg,
                                      const corpus::DocumentRecord& rec) {
  const fs::path png = fs::path(cfg.grids_dir) / (rec.doc_id + ".grid.png");
  if (!fs::exists(png)) {
    throw InputError("page grid missing for doc " + rec.doc_id + ": " + png.string() +
                     " (run prep-vis first)");
  }
  vispipe::PageGrid grid;
  grid.doc_id = rec.doc_id;
  grid.pixels = vispipe::load_grid_image(png.string());
  return models::grid_to_features(grid);
}

std::vector<training::Example> make_examples(const config::ExperimentConfig& cfg,
                                             const std::vector<corpus::DocumentRecord>& recs,
                                             corpus::Split split,
                                             const std::map<std::string, models::Mat>* embeddings) {
  const bool needs_visual = model_needs_visual(cfg.model_kind);
  std::vector<training::Example> out;
  for (const auto& rec : recs) {
    if (rec.split != split) continue;
    training::Example ex;
    ex.doc_id = rec.doc_id;
    if (embeddings) {
      auto it = embeddings->find(rec.doc_id);
      if (it == embeddings->end()) {
        throw IntegrityError("no embeddings for doc " + rec.doc_id + " in the cache");
      }
      ex.text = it->second;
    }
    if (needs_visual) ex.grid = load_grid_features(cfg, rec);
    ex.accepted = rec.label.accepted;
    if (rec.label.citations) ex.citation_score = corpus::citation_score(*rec.label.citations);
    out.push_back(std::move(ex));
  }
  return out;
}

std::unique_ptr<models::Model> build_model(const config::ExperimentConfig& cfg, nn::Rng& rng) {
  const auto head = cfg.run.task == training::Task::kCitation ? models::HeadKind::kRegression
                                                              : models::HeadKind::kClassification;
  if (cfg.model_kind == "schubert") {
    return std::make_unique<models::SChuBertModel>(
        models::SChuBertConfig{cfg.encoder_dim, cfg.gru_hidden, cfg.dropout_text, head,
                               cfg.num_classes},
        rng);
  }
  if (cfg.model_kind == "visual") {
    return std::make_unique<models::VisualModel>(
        models::VisualConfig{cfg.dropout_visual, head, cfg.num_classes}, rng);
  }
  if (cfg.model_kind == "multischubert") {
    models::MultiSChuBertConfig mc;
    mc.text = {cfg.encoder_dim, cfg.gru_hidden, cfg.dropout_text, head, cfg.num_classes};
    mc.visual.dropout = cfg.dropout_visual;
    mc.visual.head = head;
    mc.fusion = cfg.fusion;
    return std::make_unique<models::MultiSChuBertModel>(mc, rng);
  }
  if (cfg.model_kind == "schubert_mtl") {
    if (cfg.run.task == training::Task::kAcceptReject ||
        cfg.run.task == training::Task::kCitation) {
      throw ParseError("model schubert_mtl requires one of the mtl tasks");
    }
    return std::make_unique<models::MtlModel>(
        models::MtlConfig{cfg.encoder_dim, cfg.gru_hidden, cfg.dropout_text, cfg.mtl_task_hidden},
        rng);
  }
  throw ParseError("unknown model kind: " + cfg.model_kind);
}

double selection_value_of(const training::EpochMetrics& m, training::SelectionMetric metric,
                          training::Task task) {
  std::vector<training::EpochMetrics> one = {m};
  (void)training::select_epoch({metric}, task, one);  // validates availability
  switch (metric) {
    case training::SelectionMetric::kValR2Max: return *m.val_r2;
    case training::SelectionMetric::kValCeLossMin: return *m.val_ar_loss;
    case training::SelectionMetric::kValCombinedLossMin: return *m.val_combined_loss;
    case training::SelectionMetric::kValPrimaryLossMin:
      return task == training::Task::kMtlWeightedCit ? *m.val_cit_loss : *m.val_ar_loss;
  }
  throw DomainError("unknown selection metric enum");
}

json epoch_to_json(const training::EpochMetrics& m, int repeat) {
  json j;
  j["repeat"] = repeat;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  if (m.val_ar_loss) j["val_ar_loss"] = *m.val_ar_loss;
  if (m.val_cit_loss) j["val_cit_loss"] = *m.val_cit_loss;
  if (m.val_combined_loss) j["val_combined_loss"] = *m.val_combined_loss;
  if (m.val_r2) j["val_r2"] = *m.val_r2;
  if (m.val_accuracy) j["val_accuracy"] = *m.val_accuracy;
  j["lr"] = m.lr;
  j["unfrozen_blocks"] = m.unfrozen_blocks;
  return j;
}

// ---------------------------------------------------------------------------
// Verbs

int cmd_prep_vis(const CommonOpts& opts) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  const std::string out_dir = !opts.out_dir.empty() ? opts.out_dir : cfg.grids_dir;
  if (out_dir.empty()) throw ParseError("prep-vis needs --out or dataset.grids_dir");
  long built = 0, skipped = 0;
  for (const auto& rec : records) {
    if (rec.page_paths.empty()) {
      ++skipped;
      continue;
    }
    vispipe::PageGrid grid = vispipe::build_grid_from_files(rec.page_paths, cfg.grid, rec.doc_id);
    vispipe::save_grid(grid, cfg.grid, out_dir);
    ++built;
  }
  json summary;
  summary["grids_built"] = built;
  summary["documents_without_pages"] = skipped;
  summary["grid"] = cfg.grid.grid_tag();
  write_json(fs::path(out_dir) / "prep_vis.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_embed(const CommonOpts& opts) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  std::string cache_path = cfg.cache_path;
  if (!opts.out_dir.empty()) cache_path = (fs::path(opts.out_dir) / "cache.jsonl").string();
  if (cache_path.empty()) throw ParseError("embed needs --out or dataset.cache");
  auto encoder = textpipe::make_encoder(cfg.encoder_name, cfg.encoder_dim);
  std::vector<textpipe::ChunkEmbeddingSequence> seqs;
  for (const auto& rec : records) {
    seqs.push_back(textpipe::encode_document(rec, *encoder, cfg.chunker));
  }
  fs::create_directories(fs::path(cache_path).parent_path());
  textpipe::write_cache(seqs, cache_path);
  std::cout << "wrote " << seqs.size() << " documents to " << cache_path << '\n';
  return 0;
}

int cmd_stats(const CommonOpts& opts) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  json out;
  for (corpus::Split s :
       {corpus::Split::kTrain, corpus::Split::kValidation, corpus::Split::kTest}) {
    const bool present = std::any_of(records.begin(), records.end(),
                                     [&](const auto& r) { return r.split == s; });
    if (!present) continue;
    auto st = corpus::split_statistics(records, s);
    json j;
    j["count"] = st.count;
    if (st.accept_fraction) j["accept_fraction"] = *st.accept_fraction;
    if (st.label_mean) j["citation_score_mean"] = *st.label_mean;
    if (st.label_std) j["citation_score_std"] = *st.label_std;
    out[corpus::split_name(s)] = j;
  }
  std::cout << out.dump(2) << '\n';
  if (!opts.out_dir.empty()) write_json(fs::path(opts.out_dir) / "stats.json", out);
  return 0;
}

int cmd_filter_leakage(const CommonOpts& opts, const std::vector<std::string>& title_files,
                       const std::string& mode_name) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  if (title_files.empty()) throw ParseError("filter-leakage needs at least one --titles file");
  leakage::FilterMode mode;
  if (mode_name == "test_only") {
    mode = leakage::FilterMode::kTestOnly;
  } else if (mode_name == "all_splits") {
    mode = leakage::FilterMode::kAllSplits;
  } else {
    throw ParseError("--mode must be test_only or all_splits");
  }
  leakage::TitleIndex index = leakage::load_title_index(title_files, "external");
  leakage::FilterResult result = leakage::filter_split(records, index, mode);

  json report;
  report["mode"] = mode_name;
  report["index_titles"] = index.raw_count;
  report["total"] = records.size();
  report["kept"] = result.kept.size();
  for (const auto& rep : result.reports) {
    json j;
    j["total"] = rep.total;
    j["overlapping"] = rep.overlapping;
    j["empty_title"] = rep.empty_title;
    j["ratio"] = rep.ratio;
    j["filtered"] = rep.filtered;
    report["splits"][corpus::split_name(rep.split)] = j;
  }
  std::cout << report.dump(2) << '\n';
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    corpus::write_manifest(result.kept,
                           (fs::path(opts.out_dir) / "manifest.filtered.jsonl").string());
    write_json(fs::path(opts.out_dir) / "leakage_report.json", report);
  }
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  config::ExperimentConfig cfg = resolve(opts);
  const std::string out_dir = !opts.out_dir.empty() ? opts.out_dir : "runs/latest";
  fs::create_directories(out_dir);
  auto records = load_records(cfg);

  std::optional<std::map<std::string, models::Mat>> embeddings;
  if (model_needs_text(cfg.model_kind)) embeddings = text_embeddings(cfg, records);
  const auto* emb = embeddings ? &*embeddings : nullptr;
  training::Dataset data;
  data.train = make_examples(cfg, records, corpus::Split::kTrain, emb);
  data.validation = make_examples(cfg, records, corpus::Split::kValidation, emb);

  write_json(fs::path(out_dir) / "config.json", cfg.raw);
  write_json(fs::path(out_dir) / "run.json", run_record(cfg, opts));
  std::ofstream trace_out(fs::path(out_dir) / "trace.jsonl");

  training::UnfreezeSchedule schedule =
      training::make_schedule(cfg.schedule, cfg.run.epochs, cfg.run.decay_factor);
  std::vector<std::map<std::string, double>> run_metrics;
  std::optional<double> best_overall;
  const bool maximize = cfg.selection.metric == training::SelectionMetric::kValR2Max;

  for (int r = 0; r < cfg.run.repeats; ++r) {
    training::TrainRunConfig run_cfg = cfg.run;
    run_cfg.seed = cfg.run.seed + static_cast<std::uint64_t>(r);
    nn::Rng model_rng(run_cfg.seed);
    auto model = build_model(cfg, model_rng);
    training::TrainResult result =
        training::train(*model, data, run_cfg, schedule, cfg.selection);
    for (const auto& m : result.trace) trace_out << epoch_to_json(m, r).dump() << '\n';

    training::restore_checkpoint(*model, result.best);
    run_metrics.push_back(
        training::evaluate_model(*model, cfg.run.task, data.validation, cfg.run.batch_size));

    const auto& best_epoch = result.trace[static_cast<std::size_t>(result.selected_epoch)];
    const double sel = selection_value_of(best_epoch, cfg.selection.metric, cfg.run.task);
    const bool improved =
        !best_overall || (maximize ? sel > *best_overall : sel < *best_overall);
    if (improved) {
      best_overall = sel;
      checkpoint::Sidecar sidecar;
      sidecar.model_kind = cfg.model_kind;
      sidecar.fusion_method = models::fusion_method_name(cfg.fusion.method);
      sidecar.encoder_name = cfg.encoder_name;
      sidecar.grid = cfg.grid.grid_tag();
      sidecar.epoch = result.selected_epoch;
      sidecar.validation_metric = sel;
      checkpoint::save(*model, sidecar, (fs::path(out_dir) / "best.ckpt").string());
    }
  }

  json report;
  report["task"] = training::task_name(cfg.run.task);
  report["model"] = cfg.model_kind;
  report["repeats"] = cfg.run.repeats;
  for (const auto& [key, agg] : training::aggregate_runs(run_metrics)) {
    report["validation"][key] = {{"mean", agg.mean}, {"std", agg.std}, {"n", agg.n_runs}};
  }
  write_json(fs::path(out_dir) / "report.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& ckpt_path) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  nn::Rng rng(cfg.run.seed);
  auto model = build_model(cfg, rng);
  checkpoint::load(*model, ckpt_path);

  std::optional<std::map<std::string, models::Mat>> embeddings;
  if (model_needs_text(cfg.model_kind)) embeddings = text_embeddings(cfg, records);
  auto test = make_examples(cfg, records, corpus::Split::kTest,
                            embeddings ? &*embeddings : nullptr);
  if (test.empty()) throw InputError("manifest has no test split to evaluate");

  json report;
  report["checkpoint"] = ckpt_path;
  report["n_test"] = test.size();
  for (const auto& [k, v] :
       training::evaluate_model(*model, cfg.run.task, test, cfg.run.batch_size)) {
    report["test"][k] = v;
  }
  std::cout << report.dump(2) << '\n';
  if (!opts.out_dir.empty()) write_json(fs::path(opts.out_dir) / "eval.json", report);
  return 0;
}

int cmd_baseline(const CommonOpts& opts) {
  config::ExperimentConfig cfg = resolve(opts);
  auto records = load_records(cfg);
  const auto [w_ar, w_cit] = training::task_loss_weights(cfg.run.task);

  json report;
  if (w_ar > 0.0) {
    std::vector<bool> train_labels, test_labels;
    for (const auto& r : records) {
      if (!r.label.accepted) continue;
      (r.split == corpus::Split::kTrain ? train_labels : test_labels).push_back(*r.label.accepted);
    }
    if (train_labels.empty() || test_labels.empty()) {
      throw InputError("baseline: accept/reject labels missing from train or test split");
    }
    auto clf = metrics::majority_baseline(train_labels);
    std::vector<double> scores(test_labels.size(), clf.predicted_class ? 1.0 : 0.0);
    report["majority_class"] = clf.predicted_class ? "accept" : "reject";
    for (const auto& [k, v] : metrics::classification_metrics(test_labels, scores).as_map()) {
      report["classification"][k] = v;
    }
  }
  if (w_cit > 0.0) {
    std::vector<double> train_scores, test_scores;
    for (const auto& r : records) {
      if (!r.label.citations) continue;
      (r.split == corpus::Split::kTrain ? train_scores : test_scores)
          .push_back(corpus::citation_score(*r.label.citations));
    }
    if (train_scores.empty() || test_scores.empty()) {
      throw InputError("baseline: citation labels missing from train or test split");
    }
    auto reg = metrics::average_baseline(train_scores);
    std::vector<double> preds(test_scores.size(), reg.mean_score);
    report["mean_citation_score"] = reg.mean_score;
    for (const auto& [k, v] : metrics::regression_metrics(test_scores, preds).as_map()) {
      report["regression"][k] = v;
    }
  }
  std::cout << report.dump(2) << '\n';
  if (!opts.out_dir.empty()) write_json(fs::path(opts.out_dir) / "baseline.json", report);
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path report_path = fs::path(run_dir) / "report.json";
  if (!fs::exists(report_path)) throw InputError("no report.json under " + run_dir);
  std::ifstream in(report_path);
  json report = json::parse(in);
  std::cout << "task:   " << report.value("task", "?") << '\n'
            << "model:  " << report.value("model", "?") << '\n'
            << "repeats: " << report.value("repeats", 0) << '\n';
  if (report.contains("validation")) {
    for (const auto& [key, agg] : report.at("validation").items()) {
      std::cout << "  " << key << ": " << agg.at("mean").get<double>() << " +/- "
                << agg.at("std").get<double>() << '\n';
    }
  }
  const fs::path run_json = fs::path(run_dir) / "run.json";
  if (fs::exists(run_json)) {
    std::ifstream rin(run_json);
    json rec = json::parse(rin);
    std::cout << "config_hash: " << rec.value("config_hash", "?") << '\n'
              << "seed: " << rec.value("seed", 0) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scholarly document quality pipeline"};
  app.require_subcommand(1);

  CommonOpts prep_opts, embed_opts, stats_opts, leak_opts, train_opts, eval_opts, base_opts;
  std::vector<std::string> title_files;
  std::string leak_mode = "test_only";
  std::string ckpt_path;
  std::string report_dir;

  add_common(app.add_subcommand("prep-vis", "build page grids from page images"), prep_opts);
  add_common(app.add_subcommand("embed", "build the chunk-embedding cache"), embed_opts);
  add_common(app.add_subcommand("stats", "per-split corpus statistics"), stats_opts);
  auto* leak = app.add_subcommand("filter-leakage", "remove titles that overlap an external list");
  add_common(leak, leak_opts);
  leak->add_option("--titles", title_files, "title list file (repeatable)");
  leak->add_option("--mode", leak_mode, "test_only | all_splits");
  add_common(app.add_subcommand("train", "train a model and write a run directory"), train_opts);
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  add_common(eval, eval_opts);
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  add_common(app.add_subcommand("baseline", "majority / average baselines"), base_opts);
  app.add_subcommand("report", "summarize a run directory")
      ->add_option("--run", report_dir, "run directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("prep-vis")) return cmd_prep_vis(prep_opts);
    if (app.got_subcommand("embed")) return cmd_embed(embed_opts);
    if (app.got_subcommand("stats")) return cmd_stats(stats_opts);
    if (app.got_subcommand("filter-leakage")) {
      return cmd_filter_leakage(leak_opts, title_files, leak_mode);
    }
    if (app.got_subcommand("train")) return cmd_train(train_opts);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(eval_opts, ckpt_path);
    if (app.got_subcommand("baseline")) return cmd_baseline(base_opts);
    if (app.got_subcommand("report")) return cmd_report(report_dir);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const LabelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    // InputError, EnvironmentError, IntegrityError, CorruptionError, ...
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
