#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msb/models.hpp"

namespace msb::training {

enum class Task { kAcceptReject, kCitation, kMtl, kMtlWeightedAr, kMtlWeightedCit };
Task parse_task(const std::string& name);
const char* task_name(Task t);

enum class ScheduleKind { kAr, kCit, kNone };
ScheduleKind parse_schedule_kind(const std::string& name);

struct UnfreezeSchedule {
  struct Stage {
    std::set<int> blocks;
    float lr_multiplier = 1.0f;
  };
  ScheduleKind kind = ScheduleKind::kNone;
  std::vector<Stage> stages;  // indexed by epoch

  const Stage& at(int epoch) const;
};

// ar: 30 frozen epochs then all ten blocks; cit: one more block from the
// output end every two epochs, complete by epoch 20. The learning-rate
// multiplier shrinks by decay_factor at every unfreeze event after the
// first. Epoch counts scale proportionally when total_epochs != 40.
UnfreezeSchedule make_schedule(ScheduleKind kind, int total_epochs, float decay_factor = 0.5f);

enum class SelectionMetric { kValR2Max, kValCeLossMin, kValCombinedLossMin, kValPrimaryLossMin };
SelectionMetric parse_selection_metric(const std::string& name);

struct SelectionRule {
  SelectionMetric metric = SelectionMetric::kValCeLossMin;
  // ties break toward the earliest epoch
};

struct TrainRunConfig {
  Task task = Task::kAcceptReject;
  float base_lr = 1e-4f;
  int epochs = 40;
  int batch_size = 17;
  float decay_factor = 0.5f;
  std::uint64_t seed = 0;
  int repeats = 10;
};

struct LossBreakdown {
  double ar = 0.0;
  double cit = 0.0;
  double total = 0.0;
};

// AR -> cross-entropy, CIT -> MAE on citation-score scale; the MTL
// variants sum the two, halving the secondary task when weighted.
LossBreakdown compute_loss(Task task, const models::ModelOutput& out, const models::Batch& batch);
// Loss weights (w_ar, w_cit) implied by the task.
std::pair<double, double> task_loss_weights(Task task);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_ar_loss;       // cross-entropy
  std::optional<double> val_cit_loss;      // MAE
  std::optional<double> val_combined_loss;
  std::optional<double> val_r2;
  std::optional<double> val_accuracy;
  float lr = 0.0f;
  int unfrozen_blocks = 0;
};

// Deterministic argbest over the trace; earliest epoch wins ties.
int select_epoch(const SelectionRule& rule, Task task, const std::vector<EpochMetrics>& trace);

// One labeled example with whichever modalities the model consumes.
struct Example {
  std::string doc_id;
  models::Mat text;             // chunk embeddings (dim x n_chunks); may be empty
  models::FeatureMap grid;      // may be empty (channels == 0)
  std::optional<bool> accepted;
  std::optional<double> citation_score;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> validation;
};

models::Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& idx,
                         bool needs_text, bool needs_visual);

struct Checkpoint {
  std::vector<models::Mat> values;  // aligned with model.params()
  int epoch = -1;
};

struct TrainResult {
  std::vector<EpochMetrics> trace;
  int selected_epoch = -1;
  Checkpoint best;
};

TrainResult train(models::Model& model, const Dataset& data, const TrainRunConfig& cfg,
                  const UnfreezeSchedule& schedule, const SelectionRule& rule);

void restore_checkpoint(models::Model& model, const Checkpoint& ckpt);

// Final-split evaluation in deterministic eval mode.
std::map<std::string, double> evaluate_model(models::Model& model, Task task,
                                             const std::vector<Example>& examples,
                                             int batch_size = 32);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
  int n_runs = 0;
};

std::map<std::string, Aggregate> aggregate_runs(
    const std::vector<std::map<std::string, double>>& runs);

}  // namespace msb::training
