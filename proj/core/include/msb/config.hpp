#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msb/models.hpp"
#include "msb/textpipe.hpp"
#include "msb/training.hpp"
#include "msb/vispipe.hpp"

namespace msb::config {

// One declarative JSON document per experiment, with dotted-path CLI
// overrides (--set optimizer.epochs=5).
struct ExperimentConfig {
  // dataset
  std::string manifest;
  std::string grids_dir;
  std::string cache_path;

  // encoder
  std::string encoder_name = "mock";
  int encoder_dim = 768;
  textpipe::ChunkerConfig chunker;

  // model
  std::string model_kind = "schubert";  // schubert | visual | multischubert | schubert_mtl
  int gru_hidden = 256;
  float dropout_text = 0.3f;
  float dropout_visual = 0.5f;
  int num_classes = 2;
  int mtl_task_hidden = 256;

  models::FusionSpec fusion;
  vispipe::GridConfig grid;

  training::ScheduleKind schedule = training::ScheduleKind::kNone;
  training::TrainRunConfig run;
  training::SelectionRule selection;

  nlohmann::json raw;  // the resolved document, for snapshots and hashing
};

nlohmann::json load_json(const std::string& path);
void apply_override(nlohmann::json& doc, const std::string& key_value);
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// Stable content hash of the resolved config document.
std::string config_hash(const nlohmann::json& doc);

}  // namespace msb::config
