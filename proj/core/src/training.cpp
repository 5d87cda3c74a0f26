#include "msb/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msb/metrics.hpp"

namespace msb::training {

using models::Batch;
using models::Mat;
using models::ModelOutput;

Task parse_task(const std::string& name) {
  if (name == "accept_reject") return Task::kAcceptReject;
  if (name == "citation") return Task::kCitation;
  if (name == "mtl") return Task::kMtl;
  if (name == "mtl_weighted_ar") return Task::kMtlWeightedAr;
  if (name == "mtl_weighted_cit") return Task::kMtlWeightedCit;
  throw DomainError("unknown task: '" + name + "'");
}

const char* task_name(Task t) {
  switch (t) {
    case Task::kAcceptReject: return "accept_reject";
    case Task::kCitation: return "citation";
    case Task::kMtl: return "mtl";
    case Task::kMtlWeightedAr: return "mtl_weighted_ar";
    case Task::kMtlWeightedCit: return "mtl_weighted_cit";
  }
  throw DomainError("unknown task enum");
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "ar") return ScheduleKind::kAr;
  if (name == "cit") return ScheduleKind::kCit;
  if (name == "none") return ScheduleKind::kNone;
  throw DomainError("unknown schedule kind: '" + name + "'");
}

const UnfreezeSchedule::Stage& UnfreezeSchedule::at(int epoch) const {
  if (epoch < 0 || static_cast<std::size_t>(epoch) >= stages.size()) {
    throw DomainError("schedule has no stage for epoch " + std::to_string(epoch));
  }
  return stages[static_cast<std::size_t>(epoch)];
}

UnfreezeSchedule make_schedule(ScheduleKind kind, int total_epochs, float decay_factor) {
  if (total_epochs <= 0) throw DomainError("schedule: total_epochs must be > 0");
  if (decay_factor <= 0.0f || decay_factor > 1.0f) {
    throw DomainError("schedule: decay_factor must be in (0, 1]");
  }
  UnfreezeSchedule sched;
  sched.kind = kind;
  sched.stages.resize(static_cast<std::size_t>(total_epochs));
  std::set<int> all_blocks;
  for (int b = 1; b <= models::VisualBackbone::kNumBlocks; ++b) all_blocks.insert(b);

  switch (kind) {
    case ScheduleKind::kNone:
      for (auto& st : sched.stages) st = {{}, 1.0f};
      break;
    case ScheduleKind::kAr: {
      // 30 frozen epochs out of 40; one decay event at the single unfreeze
      const int frozen = total_epochs == 40 ? 30 : std::max(1, (3 * total_epochs) / 4);
      for (int e = 0; e < total_epochs; ++e) {
        if (e < frozen) {
          sched.stages[static_cast<std::size_t>(e)] = {{}, 1.0f};
        } else {
          sched.stages[static_cast<std::size_t>(e)] = {all_blocks, decay_factor};
        }
      }
      break;
    }
    case ScheduleKind::kCit: {
      // two epochs per block from the output end, then the remainder
      const int per_block = total_epochs == 40 ? 2 : std::max(1, total_epochs / 20);
      const int ramp = per_block * models::VisualBackbone::kNumBlocks;
      for (int e = 0; e < total_epochs; ++e) {
        const int events = std::min(e / per_block, models::VisualBackbone::kNumBlocks - 1);
        const int n_unfrozen = events + 1;
        std::set<int> blocks;
        if (e >= ramp) {
          blocks = all_blocks;
        } else {
          for (int b = models::VisualBackbone::kNumBlocks - n_unfrozen + 1;
               b <= models::VisualBackbone::kNumBlocks; ++b) {
            blocks.insert(b);
          }
        }
        const int decays = e >= ramp ? models::VisualBackbone::kNumBlocks - 1 : events;
        sched.stages[static_cast<std::size_t>(e)] = {
            blocks, std::pow(decay_factor, static_cast<float>(decays))};
      }
      break;
    }
  }
  return sched;
}

SelectionMetric parse_selection_metric(const std::string& name) {
  if (name == "val_r2_max") return SelectionMetric::kValR2Max;
  if (name == "val_ce_loss_min") return SelectionMetric::kValCeLossMin;
  if (name == "val_combined_loss_min") return SelectionMetric::kValCombinedLossMin;
  if (name == "val_primary_loss_min") return SelectionMetric::kValPrimaryLossMin;
  throw DomainError("unknown selection metric: '" + name + "'");
}

std::pair<double, double> task_loss_weights(Task task) {
  switch (task) {
    case Task::kAcceptReject: return {1.0, 0.0};
    case Task::kCitation: return {0.0, 1.0};
    case Task::kMtl: return {1.0, 1.0};
    case Task::kMtlWeightedAr: return {1.0, 0.5};
    case Task::kMtlWeightedCit: return {0.5, 1.0};
  }
  throw DomainError("unknown task enum");
}

LossBreakdown compute_loss(Task task, const ModelOutput& out, const Batch& batch) {
  const auto [w_ar, w_cit] = task_loss_weights(task);
  LossBreakdown loss;
  if (w_ar > 0.0) {
    if (batch.ar_onehot.size() == 0) throw LabelError("accept/reject labels missing for task");
    if (out.ar_probs.size() == 0) throw LabelError("model produced no classification output");
    loss.ar = nn::cross_entropy_loss(out.ar_probs, batch.ar_onehot);
  }
  if (w_cit > 0.0) {
    if (batch.cit.size() == 0) throw LabelError("citation labels missing for task");
    if (out.cit_pred.size() == 0) throw LabelError("model produced no regression output");
    loss.cit = nn::mae_loss(out.cit_pred, batch.cit);
  }
  loss.total = w_ar * loss.ar + w_cit * loss.cit;
  return loss;
}

namespace {

double selection_value(const SelectionRule& rule, Task task, const EpochMetrics& m) {
  auto require = [](const std::optional<double>& v, const char* what) {
    if (!v) throw DomainError(std::string("selection metric unavailable in trace: ") + what);
    return *v;
  };
  switch (rule.metric) {
    case SelectionMetric::kValR2Max:
      return -require(m.val_r2, "val_r2");
    case SelectionMetric::kValCeLossMin:
      return require(m.val_ar_loss, "val_ar_loss");
    case SelectionMetric::kValCombinedLossMin:
      return require(m.val_combined_loss, "val_combined_loss");
    case SelectionMetric::kValPrimaryLossMin:
      // the primary task is the one whose loss is not down-weighted
      if (task == Task::kMtlWeightedCit) return require(m.val_cit_loss, "val_cit_loss");
      return require(m.val_ar_loss, "val_ar_loss");
  }
  throw DomainError("unknown selection metric enum");
}

}  // namespace

int select_epoch(const SelectionRule& rule, Task task, const std::vector<EpochMetrics>& trace) {
  if (trace.empty()) throw DomainError("select_epoch: empty trace");
  int best = 0;
  double best_val = selection_value(rule, task, trace[0]);
  for (std::size_t e = 1; e < trace.size(); ++e) {
    const double v = selection_value(rule, task, trace[e]);
    if (v < best_val) {  // strict: earliest epoch wins ties
      best_val = v;
      best = static_cast<int>(e);
    }
  }
  return best;
}

Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& idx,
                 bool needs_text, bool needs_visual) {
  Batch batch;
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  bool any_ar = true, any_cit = true;
  for (std::size_t i : idx) {
    any_ar = any_ar && examples[i].accepted.has_value();
    any_cit = any_cit && examples[i].citation_score.has_value();
  }
  if (any_ar) batch.ar_onehot = Mat::Zero(2, n);
  if (any_cit) batch.cit = Mat::Zero(1, n);
  Eigen::Index col = 0;
  for (std::size_t i : idx) {
    const Example& ex = examples[i];
    batch.doc_ids.push_back(ex.doc_id);
    if (needs_text) {
      if (ex.text.size() == 0) throw IntegrityError("doc " + ex.doc_id + " lacks text embeddings");
      batch.text.push_back(ex.text);
    }
    if (needs_visual) {
      if (ex.grid.channels == 0) throw IntegrityError("doc " + ex.doc_id + " lacks a page grid");
      batch.grids.push_back(ex.grid);
    }
    if (any_ar) batch.ar_onehot(*ex.accepted ? 1 : 0, col) = 1.0f;  // row 1 = accept
    if (any_cit) batch.cit(0, col) = static_cast<float>(*ex.citation_score);
    ++col;
  }
  return batch;
}

namespace {

struct ValStats {
  std::optional<double> ar_loss, cit_loss, combined, r2, accuracy;
};

ValStats validate(models::Model& model, Task task, const std::vector<Example>& examples,
                  int batch_size, bool needs_text, bool needs_visual) {
  const auto [w_ar, w_cit] = task_loss_weights(task);
  std::vector<bool> labels;
  std::vector<double> scores, cit_labels, cit_preds;
  double ar_loss_sum = 0.0, cit_loss_sum = 0.0;
  long n = 0;
  for (std::size_t start = 0; start < examples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(examples.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    Batch batch = make_batch(examples, idx, needs_text, needs_visual);
    ModelOutput out = model.forward(batch, /*training=*/false);
    const long bn = static_cast<long>(idx.size());
    if (w_ar > 0.0) {
      ar_loss_sum += nn::cross_entropy_loss(out.ar_probs, batch.ar_onehot) * bn;
      for (Eigen::Index c = 0; c < out.ar_probs.cols(); ++c) {
        labels.push_back(batch.ar_onehot(1, c) > 0.5f);
        scores.push_back(out.ar_probs(1, c));
      }
    }
    if (w_cit > 0.0) {
      cit_loss_sum += nn::mae_loss(out.cit_pred, batch.cit) * bn;
      for (Eigen::Index c = 0; c < out.cit_pred.cols(); ++c) {
        cit_labels.push_back(batch.cit(0, c));
        cit_preds.push_back(out.cit_pred(0, c));
      }
    }
    n += bn;
  }
  ValStats stats;
  double combined = 0.0;
  if (w_ar > 0.0) {
    stats.ar_loss = ar_loss_sum / n;
    combined += w_ar * *stats.ar_loss;
    auto rep = metrics::classification_metrics(labels, scores);
    stats.accuracy = rep.accuracy;
  }
  if (w_cit > 0.0) {
    stats.cit_loss = cit_loss_sum / n;
    combined += w_cit * *stats.cit_loss;
    auto rep = metrics::regression_metrics(cit_labels, cit_preds);
    stats.r2 = rep.r2;
  }
  stats.combined = combined;
  return stats;
}

}  // namespace

TrainResult train(models::Model& model, const Dataset& data, const TrainRunConfig& cfg,
                  const UnfreezeSchedule& schedule, const SelectionRule& rule) {
  if (data.train.empty() || data.validation.empty()) {
    throw DomainError("train: train and validation splits must be non-empty");
  }
  if (cfg.epochs <= 0 || static_cast<std::size_t>(cfg.epochs) > schedule.stages.size()) {
    throw DomainError("train: schedule does not cover the configured epochs");
  }
  const auto [w_ar, w_cit] = task_loss_weights(cfg.task);
  const bool needs_visual = model.uses_visual();
  const bool needs_text = std::string(model.kind()) != "visual";

  nn::AdamOptimizer optimizer(model.params(), cfg.base_lr);
  Rng shuffle_rng(cfg.seed);

  TrainResult result;
  std::optional<double> best_val;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto& stage = schedule.at(epoch);
    model.set_trainable_blocks(stage.blocks);
    optimizer.set_learning_rate(cfg.base_lr * stage.lr_multiplier);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(
                              std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size))));
      Batch batch = make_batch(data.train, idx, needs_text, needs_visual);
      ModelOutput out = model.forward(batch, /*training=*/true);
      LossBreakdown loss = compute_loss(cfg.task, out, batch);
      if (!std::isfinite(loss.total)) {
        throw TrainingError("divergent (non-finite) loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss.total * static_cast<double>(idx.size());
      seen += static_cast<long>(idx.size());

      optimizer.zero_grad();
      Mat d_ar, d_cit;
      if (w_ar > 0.0) {
        d_ar = nn::cross_entropy_grad(out.ar_probs, batch.ar_onehot) * static_cast<float>(w_ar);
      }
      if (w_cit > 0.0) {
        d_cit = nn::mae_grad(out.cit_pred, batch.cit) * static_cast<float>(w_cit);
      }
      model.backward(batch, d_ar, d_cit);
      optimizer.step();
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(seen);
    m.lr = optimizer.learning_rate();
    m.unfrozen_blocks = static_cast<int>(stage.blocks.size());
    ValStats vs = validate(model, cfg.task, data.validation, cfg.batch_size, needs_text,
                           needs_visual);
    m.val_ar_loss = vs.ar_loss;
    m.val_cit_loss = vs.cit_loss;
    m.val_combined_loss = vs.combined;
    m.val_r2 = vs.r2;
    m.val_accuracy = vs.accuracy;
    result.trace.push_back(m);

    const double sel = selection_value(rule, cfg.task, m);
    if (!best_val || sel < *best_val) {
      best_val = sel;
      result.best.epoch = epoch;
      result.best.values.clear();
      for (nn::Param* p : model.params()) result.best.values.push_back(p->value);
    }
  }
  result.selected_epoch = select_epoch(rule, cfg.task, result.trace);
  return result;
}

void restore_checkpoint(models::Model& model, const Checkpoint& ckpt) {
  auto params = model.params();
  if (params.size() != ckpt.values.size()) {
    throw IntegrityError("checkpoint does not match the model's parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != ckpt.values[i].rows() ||
        params[i]->value.cols() != ckpt.values[i].cols()) {
      throw IntegrityError("checkpoint shape mismatch for " + params[i]->name);
    }
    params[i]->value = ckpt.values[i];
  }
}

std::map<std::string, double> evaluate_model(models::Model& model, Task task,
                                             const std::vector<Example>& examples,
                                             int batch_size) {
  const auto [w_ar, w_cit] = task_loss_weights(task);
  const bool needs_visual = model.uses_visual();
  const bool needs_text = std::string(model.kind()) != "visual";
  std::vector<bool> labels;
  std::vector<double> scores, cit_labels, cit_preds;
  for (std::size_t start = 0; start < examples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(examples.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    Batch batch = make_batch(examples, idx, needs_text, needs_visual);
    ModelOutput out = model.forward(batch, /*training=*/false);
    if (w_ar > 0.0) {
      for (Eigen::Index c = 0; c < out.ar_probs.cols(); ++c) {
        labels.push_back(batch.ar_onehot(1, c) > 0.5f);
        scores.push_back(out.ar_probs(1, c));
      }
    }
    if (w_cit > 0.0) {
      for (Eigen::Index c = 0; c < out.cit_pred.cols(); ++c) {
        cit_labels.push_back(batch.cit(0, c));
        cit_preds.push_back(out.cit_pred(0, c));
      }
    }
  }
  std::map<std::string, double> out_map;
  if (w_ar > 0.0) {
    auto rep = metrics::classification_metrics(labels, scores);
    for (const auto& [k, v] : rep.as_map()) out_map["ar_" + k] = v;
  }
  if (w_cit > 0.0) {
    auto rep = metrics::regression_metrics(cit_labels, cit_preds);
    for (const auto& [k, v] : rep.as_map()) out_map["cit_" + k] = v;
  }
  return out_map;
}

std::map<std::string, Aggregate> aggregate_runs(
    const std::vector<std::map<std::string, double>>& runs) {
  if (runs.empty()) throw DomainError("aggregate_runs: no runs");
  for (const auto& run : runs) {
    if (run.size() != runs.front().size()) {
      throw IntegrityError("aggregate_runs: heterogeneous metric sets");
    }
    for (const auto& [k, v] : runs.front()) {
      (void)v;
      if (!run.count(k)) throw IntegrityError("aggregate_runs: metric '" + k + "' missing in a run");
    }
  }
  std::map<std::string, Aggregate> agg;
  const double n = static_cast<double>(runs.size());
  for (const auto& [key, first] : runs.front()) {
    (void)first;
    double mean = 0.0;
    for (const auto& run : runs) mean += run.at(key);
    mean /= n;
    double var = 0.0;
    for (const auto& run : runs) var += (run.at(key) - mean) * (run.at(key) - mean);
    var /= n;  // population
    agg[key] = {mean, std::sqrt(var), static_cast<int>(runs.size())};
  }
  return agg;
}

}  // namespace msb::training
