// Test double for the external trainer protocol.
//   stub_trainer [mode] [--truth manifest.csv] [--peak P] [--log requests.jsonl]
// Modes: uniform (default), oracle, fail-fit, crash-fit, crash-predict, garbage, bad-sum,
// wrong-length, hang. The oracle predicts the true label of images listed in --truth; with
// --peak it is right only on a fraction 1 - |P - peak| of images, so the best P is known.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "lca/dataset.hpp"
#include "lca/rng.hpp"

using nlohmann::json;

namespace {

void reply(const json& j) {
  std::cout << j.dump() << '\n';
  std::cout.flush();
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = "uniform";
  std::string truth_path;
  double peak = -1.0;
  std::string log_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--truth" && i + 1 < argc) {
      truth_path = argv[++i];
    } else if (a == "--log" && i + 1 < argc) {
      log_path = argv[++i];
    } else if (a == "--peak" && i + 1 < argc) {
      peak = std::atof(argv[++i]);
    } else {
      mode = a;
    }
  }
  std::size_t classes = 0;
  double probability = 0.0;
  std::map<std::string, int> truth;
  std::string line;
  while (std::getline(std::cin, line)) {
    const json req = json::parse(line);
    if (!log_path.empty()) std::ofstream(log_path, std::ios::app) << line << '\n';
    const std::string cmd = req.at("cmd");
    if (cmd == "fit") {
      if (mode == "crash-fit") return 3;
      if (mode == "fail-fit") {
        reply({{"ok", false}, {"error", "refusing to train"}});
        continue;
      }
      if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
      classes = req.at("classes").size();
      probability = req.at("policy").at("probability").get<double>();
      if (!truth_path.empty()) {
        const lca::LabelSet labels(req.at("classes").get<std::vector<std::string>>());
        for (const auto& s : lca::load_manifest_file(truth_path, labels).samples) truth[s.image_id] = s.label;
      }
      reply({{"ok", true}});
      continue;
    }
    if (cmd != "predict") {
      reply({{"ok", false}, {"error", "unknown command " + cmd}});
      continue;
    }
    if (mode == "crash-predict") return 4;
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    std::vector<double> probs(classes, 1.0 / static_cast<double>(classes));
    if (mode == "bad-sum") probs.assign(classes, 0.6);
    if (mode == "wrong-length") probs.push_back(0.0);
    if (mode == "oracle") {
      const std::string id = std::filesystem::path(req.at("image_path").get<std::string>()).stem().string();
      const auto it = truth.find(id);
      if (it != truth.end()) {
        int label = it->second;
        if (peak >= 0.0) {
          const double u = static_cast<double>(lca::hash_name(id) % 1000) / 1000.0;
          if (u >= 1.0 - std::abs(probability - peak)) label = (label + 1) % static_cast<int>(classes);
        }
        probs.assign(classes, 0.1 / static_cast<double>(classes - 1));
        probs[static_cast<std::size_t>(label)] = 0.9;
      }
    }
    reply({{"ok", true}, {"probs", probs}});
  }
  return 0;
}
