#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lca/classifier.hpp"

namespace lca {

// m[i][j] = number of samples of true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 0);

  int classes() const noexcept { return classes_; }
  std::uint64_t at(int truth, int pred) const { return counts_.at(index(truth, pred)); }
  void add(int truth, int pred, std::uint64_t n = 1);
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t row_sum(int i) const;
  std::uint64_t col_sum(int j) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int pred) const;

  int classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

ConfusionMatrix confusion(std::span<const int> truths, std::span<const int> preds, int classes);

struct OneVsRest {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  friend bool operator==(const OneVsRest&, const OneVsRest&) = default;
};

OneVsRest one_vs_rest_counts(const ConfusionMatrix& cm, int i);

struct ClassMetrics {
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
};

// Throws UndefinedMetricError when a denominator is zero.
ClassMetrics class_metrics(const ConfusionMatrix& cm, int i);
// Unweighted mean of per-class sensitivity; every class must occur in the truths.
double bacc(const ConfusionMatrix& cm);

// Mann-Whitney form: (#{pos > neg} + 0.5 #{ties}) / (n_pos n_neg) on score column i.
double roc_auc_ovr(std::span<const ProbVector> scores, std::span<const int> truths, int i);

// Argmax with ties broken toward the lowest class index.
int argmax(std::span<const double> probs);
std::vector<int> argmax_predictions(std::span<const ProbVector> scores);

struct ClassReport {
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
};

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ClassReport> per_class;
  double bacc = 0.0;
  double avg_auc = 0.0;
  double avg_precision = 0.0;
  double avg_accuracy = 0.0;
  double avg_specificity = 0.0;
  ConfusionMatrix confusion{0};
};

MetricsReport full_report(std::span<const ProbVector> scores, std::span<const int> truths,
                          std::vector<std::string> class_names);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& j);
// Metric rows (AUC, Average Precision, Accuracy, Sensitivity, Specificity) by
// columns (Mean Value, one per class).
std::string metrics_csv(const MetricsReport& report);

}  // namespace lca
