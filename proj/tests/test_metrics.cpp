#include <doctest.h>

#include <cmath>

#include "lca/error.hpp"
#include "lca/metrics.hpp"
#include "lca/rng.hpp"

using namespace lca;

namespace {

ConfusionMatrix cm_from(std::initializer_list<std::initializer_list<int>> rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (int v : row) cm.add(i, j++, static_cast<std::uint64_t>(v));
    ++i;
  }
  return cm;
}

struct Counts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

// Per-sample counting, independent of the confusion matrix.
Counts brute_counts(const std::vector<int>& t, const std::vector<int>& p, int i) {
  Counts c;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const bool is = t[k] == i;
    const bool said = p[k] == i;
    if (is && said) ++c.tp;
    else if (!is && said) ++c.fp;
    else if (is && !said) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double brute_auc(const std::vector<ProbVector>& s, const std::vector<int>& t, int i) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a) {
    if (t[a] != i) continue;
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (t[b] == i) continue;
      const double x = s[a][static_cast<std::size_t>(i)];
      const double y = s[b][static_cast<std::size_t>(i)];
      wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("confusion matrix") {
  const std::vector<int> t{0, 0, 1, 1, 1};
  const std::vector<int> p{0, 1, 1, 1, 1};
  CHECK(confusion(t, p, 2) == cm_from({{1, 1}, {0, 3}}));
  CHECK(confusion(t, t, 2) == cm_from({{2, 0}, {0, 3}}));
  const ConfusionMatrix empty = confusion(std::vector<int>{}, std::vector<int>{}, 3);
  CHECK(empty.total() == 0);
  CHECK(empty == ConfusionMatrix(3));
  CHECK_THROWS_AS(confusion(t, std::vector<int>{0}, 2), ValidationError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{0}, 2), ValidationError);
}

TEST_CASE("one-vs-rest counts and class metrics") {
  const ConfusionMatrix cm = cm_from({{1, 1}, {0, 2}});
  CHECK(one_vs_rest_counts(cm, 0) == OneVsRest{1, 0, 1, 2});
  const ClassMetrics m = class_metrics(cm, 0);
  CHECK(m.precision == 1.0);
  CHECK(m.sensitivity == 0.5);
  CHECK(m.specificity == 1.0);
  CHECK(m.accuracy == 0.75);
  CHECK(bacc(cm) == 0.75);

  const ConfusionMatrix sparse = cm_from({{2, 0, 0}, {0, 1, 0}, {0, 0, 0}});
  CHECK(one_vs_rest_counts(sparse, 2) == OneVsRest{0, 0, 0, 3});
  try {
    class_metrics(sparse, 2);
    FAIL("expected an undefined metric");
  } catch (const UndefinedMetricError& e) {
    CHECK(e.class_index() == 2);
    CHECK(e.metric() == "precision");
  }
  CHECK_THROWS_AS(bacc(sparse), UndefinedMetricError);

  const ConfusionMatrix perfect = cm_from({{3, 0, 0}, {0, 2, 0}, {0, 0, 5}});
  for (int i = 0; i < 3; ++i) {
    const ClassMetrics pm = class_metrics(perfect, i);
    CHECK(pm.precision == 1.0);
    CHECK(pm.sensitivity == 1.0);
    CHECK(pm.specificity == 1.0);
    CHECK(pm.accuracy == 1.0);
  }
  CHECK(bacc(perfect) == 1.0);
}

TEST_CASE("auc") {
  const std::vector<ProbVector> s{{0.1, 0.9}, {0.6, 0.4}, {0.5, 0.5}};
  const std::vector<int> t{1, 1, 0};
  CHECK(roc_auc_ovr(s, t, 1) == 0.5);
  const std::vector<ProbVector> sep{{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}};
  CHECK(roc_auc_ovr(sep, std::vector<int>{0, 0, 1}, 0) == 1.0);
  const std::vector<ProbVector> same{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  CHECK(roc_auc_ovr(same, std::vector<int>{0, 1, 1}, 0) == 0.5);
  CHECK_THROWS_AS(roc_auc_ovr(same, std::vector<int>{1, 1, 1}, 0), UndefinedMetricError);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK_THROWS_AS(argmax(std::vector<double>{}), ValidationError);
}

TEST_CASE("metrics equal the brute-force oracle on random instances") {
  Rng rng(101);
  int reports = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + static_cast<int>(rng.index(4));
    const int n = 1 + static_cast<int>(rng.index(200));
    std::vector<int> t(static_cast<std::size_t>(n));
    std::vector<ProbVector> s(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      t[static_cast<std::size_t>(k)] = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
      ProbVector p(static_cast<std::size_t>(c));
      double sum = 0.0;
      // coarse scores so ties occur
      for (auto& v : p) sum += v = static_cast<double>(rng.index(5));
      if (sum == 0.0) p[0] = sum = 1.0;
      for (auto& v : p) v /= sum;
      s[static_cast<std::size_t>(k)] = p;
    }
    const auto preds = argmax_predictions(s);
    const ConfusionMatrix cm = confusion(t, preds, c);
    CHECK(cm.total() == static_cast<std::uint64_t>(n));
    bool all_defined = true;
    double sens_sum = 0.0;
    for (int i = 0; i < c; ++i) {
      const Counts b = brute_counts(t, preds, i);
      const OneVsRest o = one_vs_rest_counts(cm, i);
      CHECK(o == OneVsRest{static_cast<std::uint64_t>(b.tp), static_cast<std::uint64_t>(b.fp),
                           static_cast<std::uint64_t>(b.fn), static_cast<std::uint64_t>(b.tn)});
      CHECK(o.tp + o.fp + o.fn + o.tn == cm.total());
      if (b.tp + b.fp == 0 || b.tp + b.fn == 0 || b.tn + b.fp == 0) {
        CHECK_THROWS_AS(class_metrics(cm, i), UndefinedMetricError);
        all_defined = false;
        continue;
      }
      const ClassMetrics m = class_metrics(cm, i);
      CHECK(m.precision == static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fp));
      CHECK(m.sensitivity == static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fn));
      CHECK(m.specificity == static_cast<double>(b.tn) / static_cast<double>(b.tn + b.fp));
      CHECK(m.accuracy == static_cast<double>(b.tn + b.tp) / static_cast<double>(n));
      sens_sum += m.sensitivity;
      const double want = brute_auc(s, t, i);
      CHECK(std::abs(roc_auc_ovr(s, t, i) - want) <= 1e-12);
    }
    if (!all_defined) continue;
    ++reports;
    CHECK(bacc(cm) == doctest::Approx(sens_sum / c).epsilon(1e-15));

    // consistent relabeling leaves BACC unchanged
    std::vector<int> perm(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) perm[static_cast<std::size_t>(i)] = (i + 1) % c;
    std::vector<int> t2;
    std::vector<int> p2;
    for (int k = 0; k < n; ++k) {
      t2.push_back(perm[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])]);
      p2.push_back(perm[static_cast<std::size_t>(preds[static_cast<std::size_t>(k)])]);
    }
    CHECK(bacc(confusion(t2, p2, c)) == doctest::Approx(bacc(cm)).epsilon(1e-15));

    // a positive monotone transform keeps AUC and predictions
    std::vector<ProbVector> cubed = s;
    for (auto& p : cubed) {
      for (auto& v : p) v = v * v * v + 0.1;
    }
    CHECK(argmax_predictions(cubed) == preds);
    for (int i = 0; i < c; ++i) CHECK(roc_auc_ovr(cubed, t, i) == roc_auc_ovr(s, t, i));

    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) names.push_back("C" + std::to_string(i));
    const MetricsReport r = full_report(s, t, names);
    double spec = 0.0;
    for (const auto& pc : r.per_class) spec += pc.specificity;
    CHECK(r.avg_specificity == doctest::Approx(spec / c).epsilon(1e-15));
    CHECK(r.bacc == bacc(cm));
    for (const auto& pc : r.per_class) {
      for (double v : {pc.precision, pc.sensitivity, pc.specificity, pc.accuracy, pc.auc}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  CHECK(reports > 100);
}

TEST_CASE("uniform random predictions give BACC near 1/C") {
  Rng rng(3);
  const int c = 7;
  const int n = 70000;
  std::vector<int> t;
  std::vector<int> p;
  for (int k = 0; k < n; ++k) {
    t.push_back(k % c);
    p.push_back(static_cast<int>(rng.index(c)));
  }
  const double per_class = static_cast<double>(n) / c;
  const double sigma = std::sqrt((1.0 / c) * (1.0 - 1.0 / c) / per_class) / std::sqrt(static_cast<double>(c));
  CHECK(std::abs(bacc(confusion(t, p, c)) - 1.0 / c) <= 3.0 * sigma);
}

TEST_CASE("full report") {
  std::vector<ProbVector> s;
  std::vector<int> t;
  std::vector<std::string> names{"MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"};
  for (int i = 0; i < 7; ++i) {
    for (int k = 0; k < 3; ++k) {
      ProbVector p(7, 0.05);
      p[static_cast<std::size_t>(i)] = 0.7;
      s.push_back(p);
      t.push_back(i);
    }
  }
  const MetricsReport r = full_report(s, t, names);
  CHECK(r.bacc == 1.0);
  CHECK(r.avg_auc == 1.0);
  CHECK(r.avg_precision == 1.0);
  CHECK(r.avg_accuracy == 1.0);
  CHECK(r.avg_specificity == 1.0);

  const std::string csv = metrics_csv(r);
  CHECK(csv.rfind("Category Metrics,Mean Value,MEL,NV,BCC,AKIEC,BKL,DF,VASC\n", 0) == 0);
  std::vector<std::string> labels;
  std::size_t pos = csv.find('\n') + 1;
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    const std::string line = csv.substr(pos, end - pos);
    labels.push_back(line.substr(0, line.find(',')));
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    pos = end + 1;
  }
  CHECK(labels == std::vector<std::string>{"AUC", "Average Precision", "Accuracy", "Sensitivity", "Specificity"});

  const MetricsReport back = metrics_report_from_json(to_json(r));
  CHECK(back.class_names == names);
  CHECK(back.confusion == r.confusion);
  CHECK(back.bacc == r.bacc);

  t.back() = 0;
  std::vector<int> missing = t;
  for (auto& v : missing) v = v == 6 ? 0 : v;
  CHECK_THROWS_AS(full_report(s, missing, names), UndefinedMetricError);
}
