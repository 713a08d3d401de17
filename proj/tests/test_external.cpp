#include <doctest.h>

#include <fstream>

#include "lca/error.hpp"
#include "lca/external.hpp"
#include "lca/metrics.hpp"
#include "test_util.hpp"

using namespace lca;
using lca::testing::TempDir;
using nlohmann::json;

namespace {

const std::string kStub = LCA_STUB_TRAINER;

DatasetManifest small_manifest(int classes, int per_class) {
  DatasetManifest m;
  std::vector<std::string> codes;
  for (int c = 0; c < classes; ++c) codes.push_back("k" + std::to_string(c));
  m.labels = LabelSet(codes);
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const std::string id = "img" + std::to_string(c) + "_" + std::to_string(i);
      m.samples.push_back({id, "les_" + id, c, "/data/" + id + ".ppm"});
    }
  }
  m.recount();
  return m;
}

FitRequest request_for(const DatasetManifest& m) {
  TrainerConfig config;
  config.max_epochs = 40;
  return {"cell-0-0-fold1", &m, LcaPolicy{lca_default(), 0.3, 5}, config, class_weights(m)};
}

std::string trainer_error(const std::string& mode, const DatasetManifest& m, const TempDir& dir,
                          std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
  ExternalClassifier clf(kStub + " " + mode, {timeout, dir.path()});
  try {
    clf.fit(request_for(m));
    clf.predict(m.samples[0], 30);
  } catch (const TrainerError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("predict reply validation") {
  CHECK(parse_predict_reply({{"ok", true}, {"probs", {0.25, 0.75}}}, 2) == ProbVector{0.25, 0.75});
  CHECK(parse_predict_reply({{"ok", true}, {"probs", {0.5, 0.50005}}}, 2).size() == 2);
  CHECK_THROWS_AS(parse_predict_reply({{"ok", true}, {"probs", {0.5, 0.6}}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply({{"ok", true}, {"probs", {1.0}}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply({{"ok", true}, {"probs", {1.5, -0.5}}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply({{"ok", true}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply({{"probs", {0.5, 0.5}}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply({{"ok", false}, {"error", "x"}}, 2), TrainerError);
  CHECK_THROWS_AS(parse_predict_reply(json::array(), 2), TrainerError);
}

TEST_CASE("subprocess line exchange") {
  Subprocess cat("cat");
  CHECK(cat.write_line("hello"));
  CHECK(cat.read_line(std::chrono::seconds(5)) == "hello");
  Subprocess silent("sleep 5");
  CHECK_THROWS_AS(silent.read_line(std::chrono::milliseconds(100)), TrainerError);
  Subprocess gone("true");
  CHECK_FALSE(gone.read_line(std::chrono::seconds(5)).has_value());
}

TEST_CASE("uniform stub yields BACC 1/C") {
  TempDir dir("ext_uniform");
  const DatasetManifest m = small_manifest(4, 5);
  ExternalClassifier clf(kStub + " --log " + (dir / "requests.jsonl").string(), {std::chrono::seconds(20), dir.path()});
  clf.fit(request_for(m));
  CHECK(clf.checkpoint_epochs() == std::vector<int>{30, 35, 40});
  std::vector<ProbVector> scores;
  std::vector<int> truths;
  for (const auto& s : m.samples) {
    scores.push_back(clf.predict(s, 35));
    truths.push_back(s.label);
  }
  for (double v : scores.front()) CHECK(v == 0.25);
  CHECK(bacc(confusion(truths, argmax_predictions(scores), 4)) == 0.25);

  // requests on the wire carry the documented fields
  std::ifstream log(dir / "requests.jsonl");
  std::string line;
  std::getline(log, line);
  const json fit = json::parse(line);
  CHECK(fit.at("cmd") == "fit");
  CHECK(fit.at("run_id") == "cell-0-0-fold1");
  CHECK(fit.at("classes") == json{"K0", "K1", "K2", "K3"});
  CHECK(fit.at("weights").size() == 4);
  CHECK(fit.at("policy").at("probability") == 0.3);
  CHECK(fit.at("config").at("max_epochs") == 40);
  const DatasetManifest written = load_manifest_file(fit.at("manifest_path").get<std::string>(), m.labels);
  CHECK(written.total() == m.total());
  std::getline(log, line);
  const json pred = json::parse(line);
  CHECK(pred.at("cmd") == "predict");
  CHECK(pred.at("image_path") == m.samples[0].path);
  CHECK(pred.at("epoch") == 35);
}

TEST_CASE("oracle stub predicts from a truth manifest") {
  TempDir dir("ext_oracle");
  const DatasetManifest m = small_manifest(3, 4);
  {
    std::ofstream out(dir / "truth.csv");
    write_manifest(out, m);
  }
  ExternalClassifier clf(kStub + " oracle --truth " + (dir / "truth.csv").string(), {std::chrono::seconds(20), dir.path()});
  clf.fit(request_for(m));
  for (const auto& s : m.samples) CHECK(argmax(clf.predict(s, 30)) == s.label);
}

TEST_CASE("trainer failures surface as trainer errors naming the run") {
  TempDir dir("ext_fail");
  const DatasetManifest m = small_manifest(2, 3);
  for (const std::string mode : {"crash-fit", "fail-fit", "crash-predict", "garbage", "bad-sum", "wrong-length"}) {
    CAPTURE(mode);
    const std::string what = trainer_error(mode, m, dir);
    CHECK(what.find("cell-0-0-fold1") != std::string::npos);
  }
  CHECK(trainer_error("garbage", m, dir).find("malformed") != std::string::npos);
  CHECK(trainer_error("fail-fit", m, dir).find("refusing to train") != std::string::npos);
  CHECK(trainer_error("hang", m, dir, std::chrono::milliseconds(300)).find("timed out") != std::string::npos);
  CHECK(trainer_error("crash-predict", m, dir).find("exited") != std::string::npos);
  ExternalClassifier fresh(kStub, {std::chrono::seconds(5), dir.path()});
  CHECK_THROWS_AS(fresh.predict(m.samples[0], 30), ValidationError);
}
