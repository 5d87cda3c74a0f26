#include "msb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msb/common.hpp"

namespace msb::metrics {

std::map<std::string, double> MetricsReport::as_map() const {
  std::map<std::string, double> m;
  if (accuracy) m["accuracy"] = *accuracy;
  if (roc_auc) m["roc_auc"] = *roc_auc;
  if (f1) m["f1"] = *f1;
  if (r2) m["r2"] = *r2;
  if (mse) m["mse"] = *mse;
  if (mae) m["mae"] = *mae;
  return m;
}

namespace {

// Rank-based AUC, equivalent to pairwise counting with half-credit ties.
std::optional<double> roc_auc(const std::vector<bool>& labels,
                              const std::vector<double>& scores) {
  const long pos = std::count(labels.begin(), labels.end(), true);
  const long neg = static_cast<long>(labels.size()) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // midranks over tied scores
  std::vector<double> rank(labels.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k]) pos_rank_sum += rank[k];
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

}  // namespace

MetricsReport classification_metrics(const std::vector<bool>& labels,
                                     const std::vector<double>& accept_scores) {
  if (labels.empty() || labels.size() != accept_scores.size()) {
    throw DomainError("classification_metrics: labels and scores must align and be non-empty");
  }
  for (double s : accept_scores) {
    if (!(s >= 0.0 && s <= 1.0)) {  // also rejects NaN
      throw DomainError("classification_metrics: scores must be in [0,1]");
    }
  }
  MetricsReport rep;
  rep.task = "accept_reject";
  rep.n = static_cast<long>(labels.size());

  long tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const bool pred = accept_scores[k] >= 0.5;
    if (pred == labels[k]) ++correct;
    if (pred && labels[k]) ++tp;
    if (pred && !labels[k]) ++fp;
    if (!pred && labels[k]) ++fn;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  const double denom = 2.0 * tp + fp + fn;
  rep.f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  rep.roc_auc = roc_auc(labels, accept_scores);
  return rep;
}

MetricsReport regression_metrics(const std::vector<double>& labels,
                                 const std::vector<double>& predictions) {
  if (labels.empty() || labels.size() != predictions.size()) {
    throw DomainError("regression_metrics: labels and predictions must align and be non-empty");
  }
  MetricsReport rep;
  rep.task = "citation";
  rep.n = static_cast<long>(labels.size());

  double mse = 0.0, mae = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double d = predictions[k] - labels[k];
    mse += d * d;
    mae += std::abs(d);
    mean += labels[k];
  }
  const double n = static_cast<double>(labels.size());
  rep.mse = mse / n;
  rep.mae = mae / n;
  mean /= n;

  if (labels.size() >= 2) {
    double ss_tot = 0.0;
    for (double y : labels) ss_tot += (y - mean) * (y - mean);
    if (ss_tot > 0.0) rep.r2 = 1.0 - mse / ss_tot;
  }
  return rep;
}

MajorityClassifier majority_baseline(const std::vector<bool>& train_labels) {
  if (train_labels.empty()) throw DomainError("majority_baseline: empty training labels");
  const long accepts = std::count(train_labels.begin(), train_labels.end(), true);
  const long rejects = static_cast<long>(train_labels.size()) - accepts;
  return {accepts >= rejects};  // tie -> accept
}

AverageRegressor average_baseline(const std::vector<double>& train_scores) {
  if (train_scores.empty()) throw DomainError("average_baseline: empty training labels");
  const double sum = std::accumulate(train_scores.begin(), train_scores.end(), 0.0);
  return {sum / static_cast<double>(train_scores.size())};
}

}  // namespace msb::metrics
