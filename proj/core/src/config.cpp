#include "msb/config.hpp"

#include <fstream>
#include <sstream>

namespace msb::config {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError("config is not valid JSON: " + path);
  return doc;
}

void apply_override(json& doc, const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParseError("override must be key.path=value: '" + key_value + "'");
  }
  const std::string path = key_value.substr(0, eq);
  const std::string value = key_value.substr(eq + 1);

  json* node = &doc;
  std::istringstream keys(path);
  std::string key;
  std::vector<std::string> parts;
  while (std::getline(keys, key, '.')) parts.push_back(key);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);

  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // bare strings allowed
  (*node)[parts.back()] = parsed;
}

namespace {

template <typename T>
T get_or(const json& doc, const char* section, const char* key, T fallback) {
  if (!doc.contains(section)) return fallback;
  const json& s = doc.at(section);
  if (!s.is_object() || !s.contains(key)) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config key ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ParseError("config root must be a JSON object");
  ExperimentConfig cfg;
  cfg.raw = doc;

  cfg.manifest = get_or<std::string>(doc, "dataset", "manifest", "");
  cfg.grids_dir = get_or<std::string>(doc, "dataset", "grids_dir", "");
  cfg.cache_path = get_or<std::string>(doc, "dataset", "cache", "");

  cfg.encoder_name = get_or<std::string>(doc, "encoder", "name", "mock");
  cfg.encoder_dim = get_or<int>(doc, "encoder", "dimension", 768);
  cfg.chunker.sequence_length = get_or<int>(doc, "encoder", "sequence_length", 512);
  cfg.chunker.overlap = get_or<int>(doc, "encoder", "overlap", 0);
  if (doc.contains("encoder") && doc.at("encoder").contains("max_chunks") &&
      !doc.at("encoder").at("max_chunks").is_null()) {
    cfg.chunker.max_chunks = doc.at("encoder").at("max_chunks").get<int>();
  }
  cfg.chunker.validate();

  cfg.model_kind = get_or<std::string>(doc, "model", "kind", "schubert");
  if (cfg.model_kind != "schubert" && cfg.model_kind != "visual" &&
      cfg.model_kind != "multischubert" && cfg.model_kind != "schubert_mtl") {
    throw ParseError("unknown model kind: '" + cfg.model_kind + "'");
  }
  cfg.gru_hidden = get_or<int>(doc, "model", "gru_hidden", 256);
  cfg.dropout_text = get_or<float>(doc, "model", "dropout_text", 0.3f);
  cfg.dropout_visual = get_or<float>(doc, "model", "dropout_visual", 0.5f);
  cfg.num_classes = get_or<int>(doc, "model", "num_classes", 2);
  cfg.mtl_task_hidden = get_or<int>(doc, "model", "task_hidden", 256);

  cfg.fusion.method =
      models::parse_fusion_method(get_or<std::string>(doc, "fusion", "method", "(u,v,|u-v|,u*v)"));
  cfg.fusion.unit_dim = get_or<int>(doc, "fusion", "unit_dim", cfg.gru_hidden);
  cfg.fusion.joint_hidden = get_or<int>(doc, "fusion", "joint_hidden", 128);

  cfg.grid.columns = get_or<int>(doc, "grid", "columns", 3);
  cfg.grid.rows = get_or<int>(doc, "grid", "rows", 4);
  cfg.grid.page_width = get_or<int>(doc, "grid", "page_width", 275);
  cfg.grid.page_height = get_or<int>(doc, "grid", "page_height", 425);
  cfg.grid.output_side = get_or<int>(doc, "grid", "output_side", 512);
  cfg.grid.validate();

  cfg.schedule = training::parse_schedule_kind(get_or<std::string>(doc, "schedule", "kind", "none"));
  cfg.run.decay_factor = get_or<float>(doc, "schedule", "decay_factor", 0.5f);

  cfg.run.task = training::parse_task(get_or<std::string>(doc, "dataset", "task", "accept_reject"));
  cfg.run.base_lr = get_or<float>(doc, "optimizer", "base_lr", 1e-4f);
  cfg.run.epochs = get_or<int>(doc, "optimizer", "epochs", 40);
  cfg.run.batch_size = get_or<int>(doc, "optimizer", "batch_size", 17);
  if (cfg.run.epochs <= 0 || cfg.run.batch_size <= 0) {
    throw ParseError("optimizer.epochs and optimizer.batch_size must be positive");
  }
  if (doc.contains("seed") && doc.at("seed").is_number()) {
    cfg.run.seed = doc.at("seed").get<std::uint64_t>();
  }
  cfg.run.repeats = doc.contains("repeats") ? doc.at("repeats").get<int>() : 1;
  if (cfg.run.repeats < 1) throw ParseError("repeats must be >= 1");

  cfg.selection.metric = training::parse_selection_metric(
      get_or<std::string>(doc, "selection", "metric",
                          cfg.run.task == training::Task::kCitation ? "val_r2_max"
                                                                    : "val_ce_loss_min"));
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = load_json(path);
  for (const auto& kv : overrides) apply_override(doc, kv);
  return parse_config(doc);
}

std::string config_hash(const json& doc) {
  const std::string canonical = doc.dump();
  const std::uint64_t h = fnv1a64(
      {reinterpret_cast<const std::uint8_t*>(canonical.data()), canonical.size()});
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace msb::config
