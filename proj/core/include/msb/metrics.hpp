#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace msb::metrics {

struct MetricsReport {
  std::string task;
  std::optional<double> accuracy;
  std::optional<double> roc_auc;  // absent when only one class is present
  std::optional<double> f1;       // accept is the positive class
  std::optional<double> r2;       // absent when label variance is zero
  std::optional<double> mse;
  std::optional<double> mae;
  long n = 0;

  std::map<std::string, double> as_map() const;
};

// Accuracy and F1 at threshold 0.5; ROC AUC is the probability that a
// random accept outranks a random reject, ties counted as one half.
MetricsReport classification_metrics(const std::vector<bool>& labels,
                                     const std::vector<double>& accept_scores);

// r2 = 1 - SS_res/SS_tot with SS_tot about the label mean of this set.
MetricsReport regression_metrics(const std::vector<double>& labels,
                                 const std::vector<double>& predictions);

struct MajorityClassifier {
  bool predicted_class = false;  // ties broken toward accept
};
struct AverageRegressor {
  double mean_score = 0.0;
};

MajorityClassifier majority_baseline(const std::vector<bool>& train_labels);
AverageRegressor average_baseline(const std::vector<double>& train_scores);

}  // namespace msb::metrics
