#include "lca/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "lca/error.hpp"

namespace lca {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 0) throw ValidationError("negative class count");
  counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

std::size_t ConfusionMatrix::index(int truth, int pred) const {
  if (truth < 0 || pred < 0 || truth >= classes_ || pred >= classes_) {
    throw ValidationError("label out of range [0, " + std::to_string(classes_) + ")");
  }
  return static_cast<std::size_t>(truth) * static_cast<std::size_t>(classes_) + static_cast<std::size_t>(pred);
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t n) {
  counts_[index(truth, pred)] += n;
  total_ += n;
}

std::uint64_t ConfusionMatrix::row_sum(int i) const {
  std::uint64_t s = 0;
  for (int j = 0; j < classes_; ++j) s += at(i, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int j) const {
  std::uint64_t s = 0;
  for (int i = 0; i < classes_; ++i) s += at(i, j);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truths, std::span<const int> preds, int classes) {
  if (truths.size() != preds.size()) {
    throw ValidationError("confusion: " + std::to_string(truths.size()) + " truths vs " +
                          std::to_string(preds.size()) + " predictions");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t k = 0; k < truths.size(); ++k) cm.add(truths[k], preds[k]);
  return cm;
}

OneVsRest one_vs_rest_counts(const ConfusionMatrix& cm, int i) {
  OneVsRest r;
  r.tp = cm.at(i, i);
  r.fn = cm.row_sum(i) - r.tp;
  r.fp = cm.col_sum(i) - r.tp;
  r.tn = cm.total() - r.tp - r.fn - r.fp;
  return r;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, int cls, const char* metric) {
  if (den == 0) {
    throw UndefinedMetricError(cls, metric,
                               std::string(metric) + " is undefined for class " + std::to_string(cls) +
                                   " (zero denominator)");
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassMetrics class_metrics(const ConfusionMatrix& cm, int i) {
  const OneVsRest r = one_vs_rest_counts(cm, i);
  ClassMetrics m;
  m.precision = ratio(r.tp, r.tp + r.fp, i, "precision");
  m.sensitivity = ratio(r.tp, r.tp + r.fn, i, "sensitivity");
  m.specificity = ratio(r.tn, r.tn + r.fp, i, "specificity");
  m.accuracy = ratio(r.tn + r.tp, r.tn + r.fp + r.fn + r.tp, i, "accuracy");
  return m;
}

double bacc(const ConfusionMatrix& cm) {
  if (cm.classes() == 0) throw ValidationError("bacc of an empty confusion matrix");
  double sum = 0.0;
  for (int i = 0; i < cm.classes(); ++i) {
    const OneVsRest r = one_vs_rest_counts(cm, i);
    sum += ratio(r.tp, r.tp + r.fn, i, "sensitivity");
  }
  return sum / cm.classes();
}

double roc_auc_ovr(std::span<const ProbVector> scores, std::span<const int> truths, int i) {
  if (scores.size() != truths.size()) throw ValidationError("roc_auc: scores and truths differ in length");
  std::vector<std::pair<double, bool>> s;
  s.reserve(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    s.emplace_back(scores[k].at(static_cast<std::size_t>(i)), truths[k] == i);
  }
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // wins and ties are counted in half-units to stay integral.
  std::uint64_t half_units = 0;
  std::uint64_t neg_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t a = 0; a < s.size();) {
    std::size_t b = a;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (b < s.size() && s[b].first == s[a].first) {
      (s[b].second ? pos : neg)++;
      ++b;
    }
    half_units += pos * (2 * neg_below + neg);
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    a = b;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError(i, "auc",
                               "auc is undefined for class " + std::to_string(i) +
                                   (n_pos == 0 ? " (no positives)" : " (no negatives)"));
  }
  return static_cast<double>(half_units) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

int argmax(std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("argmax of an empty vector");
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<int> argmax_predictions(std::span<const ProbVector> scores) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (const auto& p : scores) out.push_back(argmax(p));
  return out;
}

MetricsReport full_report(std::span<const ProbVector> scores, std::span<const int> truths,
                          std::vector<std::string> class_names) {
  const int c = static_cast<int>(class_names.size());
  for (const auto& p : scores) {
    if (p.size() != class_names.size()) throw ValidationError("score vector length differs from class count");
  }
  MetricsReport r;
  r.class_names = std::move(class_names);
  r.confusion = confusion(truths, argmax_predictions(scores), c);
  for (int i = 0; i < c; ++i) {
    if (r.confusion.row_sum(i) == 0) {
      throw UndefinedMetricError(i, "sensitivity", "class " + r.class_names[static_cast<std::size_t>(i)] +
                                                       " does not occur in the evaluated samples");
    }
  }
  for (int i = 0; i < c; ++i) {
    ClassMetrics m;
    try {
      m = class_metrics(r.confusion, i);
    } catch (const UndefinedMetricError& e) {
      throw UndefinedMetricError(i, e.metric(),
                                 e.metric() + " is undefined for class " +
                                     r.class_names[static_cast<std::size_t>(i)] + " (never predicted)");
    }
    ClassReport cr{m.precision, m.sensitivity, m.specificity, m.accuracy, roc_auc_ovr(scores, truths, i)};
    r.per_class.push_back(cr);
  }
  const auto mean = [&](double ClassReport::*field) {
    double s = 0.0;
    for (const auto& cr : r.per_class) s += cr.*field;
    return s / c;
  };
  r.bacc = bacc(r.confusion);
  r.avg_auc = mean(&ClassReport::auc);
  r.avg_precision = mean(&ClassReport::precision);
  r.avg_accuracy = mean(&ClassReport::accuracy);
  r.avg_specificity = mean(&ClassReport::specificity);
  return r;
}

json to_json(const MetricsReport& r) {
  json per = json::array();
  for (std::size_t i = 0; i < r.per_class.size(); ++i) {
    const auto& c = r.per_class[i];
    per.push_back({{"class", r.class_names[i]},
                   {"auc", c.auc},
                   {"precision", c.precision},
                   {"accuracy", c.accuracy},
                   {"sensitivity", c.sensitivity},
                   {"specificity", c.specificity}});
  }
  json cm = json::array();
  for (int i = 0; i < r.confusion.classes(); ++i) {
    json row = json::array();
    for (int j = 0; j < r.confusion.classes(); ++j) row.push_back(r.confusion.at(i, j));
    cm.push_back(row);
  }
  return {{"bacc", r.bacc},
          {"avg_auc", r.avg_auc},
          {"avg_precision", r.avg_precision},
          {"avg_accuracy", r.avg_accuracy},
          {"avg_specificity", r.avg_specificity},
          {"per_class", per},
          {"confusion", cm}};
}

MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport r;
  r.bacc = j.at("bacc").get<double>();
  r.avg_auc = j.at("avg_auc").get<double>();
  r.avg_precision = j.at("avg_precision").get<double>();
  r.avg_accuracy = j.at("avg_accuracy").get<double>();
  r.avg_specificity = j.at("avg_specificity").get<double>();
  for (const auto& c : j.at("per_class")) {
    r.class_names.push_back(c.at("class").get<std::string>());
    r.per_class.push_back({c.at("precision").get<double>(), c.at("sensitivity").get<double>(),
                           c.at("specificity").get<double>(), c.at("accuracy").get<double>(),
                           c.at("auc").get<double>()});
  }
  const auto& cm = j.at("confusion");
  r.confusion = ConfusionMatrix(static_cast<int>(cm.size()));
  for (std::size_t i = 0; i < cm.size(); ++i) {
    for (std::size_t k = 0; k < cm[i].size(); ++k) {
      r.confusion.add(static_cast<int>(i), static_cast<int>(k), cm[i][k].get<std::uint64_t>());
    }
  }
  return r;
}

std::string metrics_csv(const MetricsReport& r) {
  std::string out = "Category Metrics,Mean Value";
  for (const auto& name : r.class_names) out += "," + name;
  out += "\n";
  const auto row = [&](const char* label, double mean, double ClassReport::*field) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", mean);
    out += std::string(label) + "," + buf;
    for (const auto& c : r.per_class) {
      std::snprintf(buf, sizeof buf, "%.3f", c.*field);
      out += std::string(",") + buf;
    }
    out += "\n";
  };
  row("AUC", r.avg_auc, &ClassReport::auc);
  row("Average Precision", r.avg_precision, &ClassReport::precision);
  row("Accuracy", r.avg_accuracy, &ClassReport::accuracy);
  row("Sensitivity", r.bacc, &ClassReport::sensitivity);
  row("Specificity", r.avg_specificity, &ClassReport::specificity);
  return out;
}

}  // namespace lca
