// lca: command-line front end for the augmentation search toolkit.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lca/classifier.hpp"
#include "lca/dataset.hpp"
#include "lca/error.hpp"
#include "lca/image.hpp"
#include "lca/metrics.hpp"
#include "lca/multicrop.hpp"
#include "lca/policy.hpp"
#include "lca/search.hpp"
#include "lca/transforms.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kValidation = 2, kData = 3, kTrainer = 4, kIo = 5 };

enum class LogLevel { kQuiet, kInfo, kDebug };
LogLevel g_log_level = LogLevel::kInfo;

LogLevel parse_log_level(const std::string& s) {
  if (s == "quiet") return LogLevel::kQuiet;
  if (s == "info") return LogLevel::kInfo;
  if (s == "debug") return LogLevel::kDebug;
  throw lca::ValidationError("unknown log level '" + s + "' (quiet, info, debug)");
}

// Logs carry timestamps and go to stderr; stdout and output files stay deterministic.
void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(g_log_level)) return;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::cerr << "[" << stamp << "] " << msg << "\n";
}

void print_config(const json& config) { std::cout << "effective config: " << config.dump() << "\n"; }

void guard_overwrite(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw lca::ValidationError(path.string() + " already exists; pass --force to overwrite");
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw lca::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw lca::IoError("write to " + path.string() + " failed");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw lca::IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw lca::ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw lca::ValidationError("'" + item + "' is not a number");
    }
  }
  return out;
}

struct TrainerFlags {
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<int> crop;
  std::optional<int> feature_side;
  std::optional<double> lr;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "Maximum training epochs");
    app->add_option("--batch", batch, "Minibatch size");
    app->add_option("--crop", crop, "Training and multi-crop side");
    app->add_option("--feature-side", feature_side, "Feature grid side of the reference classifier");
    app->add_option("--lr", lr, "Initial learning rate");
  }

  lca::TrainerConfig apply(lca::TrainerConfig c) const {
    if (epochs) c.max_epochs = *epochs;
    if (batch) c.batch_size = *batch;
    if (crop) c.crop_size = *crop;
    if (feature_side) c.feature_side = *feature_side;
    if (lr) c.lr0 = *lr;
    return c;
  }
};

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  fs::path out;
  int classes = 7;
  int per_class = 100;
  int size = 256;
  int images_per_lesion = 1;
  std::uint64_t seed = 1;
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  if (a.per_class < 1) throw lca::ValidationError("--per-class must be at least 1");
  lca::SynthSpec spec;
  spec.classes = a.classes;
  spec.per_class.assign(static_cast<std::size_t>(std::max(0, a.classes)), a.per_class);
  spec.image_size = a.size;
  spec.seed = a.seed;
  spec.images_per_lesion = a.images_per_lesion;
  print_config({{"command", "synth"},
                {"out", a.out.string()},
                {"classes", a.classes},
                {"per_class", a.per_class},
                {"size", a.size},
                {"images_per_lesion", a.images_per_lesion},
                {"seed", a.seed}});
  guard_overwrite(a.out / "manifest.csv", a.force);
  const lca::DatasetManifest m = lca::synth_dataset(spec, a.out);
  std::cout << "wrote " << m.total() << " images to " << (a.out / "images").string() << "\n";
  for (std::size_t c = 0; c < m.labels.size(); ++c) {
    std::cout << "  " << m.labels.display_name(c) << ": " << m.class_counts[c] << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentArgs {
  fs::path image;
  fs::path policy_file;
  std::optional<double> probability;
  std::uint64_t seed = 0;
  int n = 8;
  fs::path out;
  std::vector<fs::path> partners;
  std::optional<int> sub_policy;
  fs::path replay;
  bool force = false;
};

int cmd_augment(const AugmentArgs& a) {
  const lca::ImageU8 image = lca::read_image_file(a.image.string());
  std::vector<lca::ImageU8> partner_images;
  for (const auto& p : a.partners) partner_images.push_back(lca::read_image_file(p.string()));
  lca::BatchContext ctx;
  for (const auto& p : partner_images) ctx.partners.push_back(&p);

  lca::LcaPolicy policy;
  if (!a.policy_file.empty()) {
    policy = lca::load_policy_file(a.policy_file.string());
  } else {
    policy.sub_policies = lca::lca_default();
    policy.seed = a.seed;
  }
  if (a.probability) policy.probability = *a.probability;
  policy.validate();
  fs::create_directories(a.out);

  if (!a.replay.empty()) {
    const json log = read_json_file(a.replay);
    print_config({{"command", "augment"}, {"image", a.image.string()}, {"replay", a.replay.string()},
                  {"noise_scale", policy.noise_scale}, {"out", a.out.string()}});
    int count = 0;
    for (const auto& entry : log.at("records")) {
      const int index = entry.at("index").get<int>();
      const lca::AppliedRecord record = lca::applied_record_from_json(entry.at("record"));
      char name[64];
      std::snprintf(name, sizeof name, "replay_%04d.ppm", index);
      guard_overwrite(a.out / name, a.force);
      lca::write_image_file((a.out / name).string(), lca::replay(image, record, ctx, policy.noise_scale));
      ++count;
    }
    std::cout << "replayed " << count << " records into " << a.out.string() << "\n";
    return kOk;
  }

  if (a.n < 0) throw lca::ValidationError("-n must be non-negative");
  const lca::SubPolicy* forced = nullptr;
  if (a.sub_policy) {
    if (!a.force) {
      throw lca::ValidationError("--sub-policy bypasses the probability gate and requires --force");
    }
    for (const auto& sp : policy.sub_policies) {
      if (sp.id == *a.sub_policy) forced = &sp;
    }
    if (!forced) throw lca::ValidationError("no sub-policy with id " + std::to_string(*a.sub_policy));
  }
  print_config({{"command", "augment"},
                {"image", a.image.string()},
                {"policy", lca::to_json(policy)},
                {"n", a.n},
                {"sub_policy", a.sub_policy ? json(*a.sub_policy) : json(nullptr)},
                {"partners", a.partners.size()},
                {"out", a.out.string()}});
  guard_overwrite(a.out / "records.json", a.force);
  json records = json::array();
  for (int i = 0; i < a.n; ++i) {
    const std::uint64_t stream = lca::derive_seed(policy.seed, "augment-cli", {static_cast<std::uint64_t>(i)});
    lca::Rng rng(stream);
    const lca::Augmented aug = forced ? lca::apply_sub_policy(image, ctx, *forced, policy, rng)
                                      : lca::apply_policy(image, ctx, policy, rng);
    char name[64];
    std::snprintf(name, sizeof name, "aug_%04d.ppm", i);
    guard_overwrite(a.out / name, a.force);
    lca::write_image_file((a.out / name).string(), aug.image);
    records.push_back({{"index", i}, {"file", name}, {"record", lca::to_json(aug.record)}});
  }
  write_file(a.out / "records.json", json{{"policy", lca::to_json(policy)}, {"records", records}}.dump(2) + "\n");
  std::cout << "wrote " << a.n << " augmented images and records.json to " << a.out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  fs::path manifest;
  fs::path out;
  int folds = 5;
  std::uint64_t seed = 0;
  fs::path holdout_dir;
  bool force = false;
};

int cmd_split(const SplitArgs& a) {
  const lca::DatasetManifest m = lca::load_manifest_file(a.manifest);
  print_config({{"command", "split"},
                {"manifest", a.manifest.string()},
                {"folds", a.folds},
                {"seed", a.seed},
                {"out", a.out.string()},
                {"holdout_dir", a.holdout_dir.string()}});
  if (!a.out.empty()) {
    guard_overwrite(a.out, a.force);
    const auto folds = lca::group_kfold(m, a.folds, lca::derive_seed(a.seed, "folds"));
    json j = json::array();
    for (const auto& f : folds) {
      j.push_back(lca::to_json(f));
      std::cout << "fold " << f.fold_id << ": " << f.train_ids.size() << " train, " << f.val_ids.size()
                << " validation\n";
    }
    write_file(a.out, j.dump(2) + "\n");
  }
  if (!a.holdout_dir.empty()) {
    const auto [train, test] = lca::holdout_split(m, a.seed);
    for (const auto& [name, part] : {std::pair{"train.csv", &train}, std::pair{"test.csv", &test}}) {
      const fs::path p = a.holdout_dir / name;
      guard_overwrite(p, a.force);
      std::ostringstream csv;
      lca::write_manifest(csv, *part, a.holdout_dir);
      write_file(p, csv.str());
    }
    std::ostringstream labels;
    for (const auto& code : m.labels.codes()) labels << code << "\n";
    write_file(a.holdout_dir / "labels.txt", labels.str());
    std::cout << "hold-out: " << train.total() << " train, " << test.total() << " test\n";
  }
  if (a.out.empty() && a.holdout_dir.empty()) throw lca::ValidationError("nothing to do: pass --out or --holdout-dir");
  return kOk;
}

// ---------------------------------------------------------------------------
// train / evaluate

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  fs::path policy_file;
  std::optional<double> probability;
  std::uint64_t seed = 0;
  TrainerFlags trainer;
  bool force = false;
};

int cmd_train(const TrainArgs& a) {
  const lca::DatasetManifest m = lca::load_manifest_file(a.manifest);
  lca::LcaPolicy policy;
  if (!a.policy_file.empty()) {
    policy = lca::load_policy_file(a.policy_file.string());
  } else {
    policy.sub_policies = lca::lca_default();
    policy.seed = lca::derive_seed(a.seed, "policy");
  }
  if (a.probability) policy.probability = *a.probability;
  lca::TrainerConfig config = a.trainer.apply({});
  config.seed = lca::derive_seed(a.seed, "train");
  config.validate();
  policy.validate();
  print_config({{"command", "train"},
                {"manifest", a.manifest.string()},
                {"seed", a.seed},
                {"policy", lca::to_json(policy)},
                {"trainer", lca::to_json(config)},
                {"out", a.out.string()}});
  guard_overwrite(a.out, a.force);
  lca::ImageStore store;
  const auto weights = lca::class_weights(m);
  log_line(LogLevel::kInfo, "training on " + std::to_string(m.total()) + " images");
  const lca::TrainResult r = lca::train_reference(m, store, policy, config, weights);
  json checkpoints = json::object();
  for (const auto& [epoch, model] : r.checkpoints) checkpoints[std::to_string(epoch)] = lca::to_json(model);
  const json bundle{{"labels", m.labels.codes()},
                    {"config", lca::to_json(config)},
                    {"policy", lca::to_json(policy)},
                    {"epoch_loss", r.epoch_loss},
                    {"final", lca::to_json(r.model)},
                    {"checkpoints", checkpoints}};
  write_file(a.out, bundle.dump() + "\n");
  char buf[96];
  std::snprintf(buf, sizeof buf, "trained %d epochs, final loss %.6f\n", config.max_epochs,
                r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
  std::cout << buf;
  return kOk;
}

struct EvaluateArgs {
  fs::path model;
  fs::path manifest;
  fs::path out;
  std::optional<int> epoch;
  std::optional<int> crop;
  bool force = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const json bundle = read_json_file(a.model);
  const lca::LabelSet labels(bundle.at("labels").get<std::vector<std::string>>());
  const lca::DatasetManifest m = lca::load_manifest_file(a.manifest, labels);
  const lca::TrainerConfig config = lca::trainer_config_from_json(bundle.at("config"));
  const int side = a.crop.value_or(config.crop_size);
  lca::LinearSoftmaxModel model;
  if (a.epoch) {
    const std::string key = std::to_string(*a.epoch);
    if (!bundle.at("checkpoints").contains(key)) {
      throw lca::ValidationError("model has no checkpoint at epoch " + key);
    }
    model = lca::model_from_json(bundle.at("checkpoints").at(key));
  } else {
    model = lca::model_from_json(bundle.at("final"));
  }
  print_config({{"command", "evaluate"},
                {"model", a.model.string()},
                {"manifest", a.manifest.string()},
                {"epoch", a.epoch ? json(*a.epoch) : json("final")},
                {"crop", side},
                {"out", a.out.string()}});
  for (std::size_t c = 0; c < m.class_counts.size(); ++c) {
    if (m.class_counts[c] == 0) {
      throw lca::DataError("class " + m.labels.display_name(c) + " is absent from " + a.manifest.string() +
                           "; its sensitivity and AUC are undefined");
    }
  }
  guard_overwrite(a.out / "metrics.csv", a.force);
  guard_overwrite(a.out / "metrics.json", a.force);
  lca::ImageStore store(false);
  std::vector<lca::ProbVector> scores;
  std::vector<int> truths;
  for (const auto& s : m.samples) {
    scores.push_back(lca::multi_crop_predict(model, *store.get(s), side));
    truths.push_back(s.label);
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < labels.size(); ++c) names.push_back(labels.display_name(c));
  const lca::MetricsReport report = lca::full_report(scores, truths, names);
  write_file(a.out / "metrics.csv", lca::metrics_csv(report));
  write_file(a.out / "metrics.json", lca::to_json(report).dump(2) + "\n");
  char buf[64];
  std::snprintf(buf, sizeof buf, "BACC %.4f over %zu images\n", report.bacc, m.total());
  std::cout << buf;
  return kOk;
}

// ---------------------------------------------------------------------------
// search / report

struct SearchArgs {
  fs::path manifest;
  fs::path test_manifest;
  fs::path grid_file;
  fs::path journal = "search_journal.jsonl";
  fs::path report_dir;
  std::string ladder;
  std::vector<std::string> external;
  std::uint64_t seed = 0;
  int workers = 0;
  std::optional<std::size_t> max_cells;
  double timeout_minutes = 30.0;
  TrainerFlags trainer;
  bool resume = false;
  bool force = false;
};

int worker_default() {
  if (const char* env = std::getenv("LCA_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw lca::ValidationError(std::string("LCA_WORKERS='") + env + "' is not a positive integer");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int cmd_search(const SearchArgs& a) {
  const lca::DatasetManifest all = lca::load_manifest_file(a.manifest);
  lca::DatasetManifest train;
  lca::DatasetManifest test;
  if (a.test_manifest.empty()) {
    std::tie(train, test) = lca::holdout_split(all, a.seed);
  } else {
    train = all;
    test = lca::load_manifest_file(a.test_manifest, all.labels);
  }

  lca::SearchGrid grid;
  grid.seed = a.seed;
  if (!a.grid_file.empty()) {
    const json g = read_json_file(a.grid_file);
    if (g.contains("ladder")) grid.ladder = g.at("ladder").get<std::vector<double>>();
    if (g.contains("folds")) grid.folds = g.at("folds").get<int>();
    if (g.contains("noise_scale")) grid.noise_scale = g.at("noise_scale").get<double>();
    if (g.contains("sub_policies")) {
      grid.sub_policies = lca::policy_from_json({{"sub_policies", g.at("sub_policies")}}).sub_policies;
    }
    if (g.contains("candidates")) {
      grid.candidates.clear();
      for (const auto& c : g.at("candidates")) grid.candidates.push_back(lca::candidate_from_json(c));
    }
  }
  if (!a.ladder.empty()) grid.ladder = parse_double_list(a.ladder);
  for (std::size_t i = 0; i < a.external.size(); ++i) {
    lca::Candidate c;
    c.name = "external" + std::to_string(i + 1);
    c.kind = lca::Candidate::Kind::kExternal;
    c.command = a.external[i];
    if (i == 0 && a.grid_file.empty()) grid.candidates.clear();
    grid.candidates.push_back(c);
  }
  for (auto& c : grid.candidates) c.config = a.trainer.apply(c.config);
  grid.validate();

  lca::SearchOptions options;
  options.journal_path = a.journal;
  options.workers = a.workers > 0 ? a.workers : worker_default();
  options.resume = a.resume;
  options.overwrite = a.force;
  options.max_new_cells = a.max_cells;
  options.external.timeout =
      std::chrono::milliseconds(static_cast<long long>(a.timeout_minutes * 60.0 * 1000.0));
  options.external.scratch_dir = a.journal.parent_path().empty() ? fs::path("lca_scratch")
                                                                 : a.journal.parent_path() / "lca_scratch";
  options.log = [](const std::string& msg) { log_line(LogLevel::kInfo, msg); };

  json cands = json::array();
  for (const auto& c : grid.candidates) cands.push_back(lca::to_json(c));
  print_config({{"command", "search"},
                {"manifest", a.manifest.string()},
                {"test_manifest", a.test_manifest.empty() ? json("hold-out split") : json(a.test_manifest.string())},
                {"train_size", train.total()},
                {"test_size", test.total()},
                {"seed", a.seed},
                {"ladder", grid.ladder},
                {"folds", grid.folds},
                {"candidates", cands},
                {"journal", a.journal.string()},
                {"resume", a.resume}});
  if (!a.report_dir.empty() && !a.force) {
    for (const char* f : {"stage1_matrix.csv", "stage2_metrics.csv", "report.json", "summary.txt"}) {
      guard_overwrite(a.report_dir / f, false);
    }
  }

  lca::ImageStore store;
  const lca::SearchOutcome outcome = lca::run_search(train, test, grid, store, options);
  const auto records = lca::SearchJournal::read(a.journal);
  if (!outcome.complete) {
    std::cout << "search interrupted with " << outcome.cells.size() << " of "
              << grid.candidates.size() * grid.ladder.size() << " cells done; rerun with --resume\n";
    return kOk;
  }
  if (outcome.winner_probability) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", *outcome.winner_probability);
    std::cout << "stage-1 winner: " << grid.candidates[*outcome.winner_candidate].name << " at P=" << buf << "\n";
  }
  for (const auto& s : outcome.stage2) {
    if (s.candidate != outcome.final_candidate) continue;
    char buf[128];
    std::snprintf(buf, sizeof buf, "selected: %s, test BACC %.4f at epoch %d\n",
                  grid.candidates[s.candidate].name.c_str(), s.best_bacc, s.best_epoch);
    std::cout << buf;
  }
  if (!a.report_dir.empty()) {
    const auto files = lca::emit_report(records, a.report_dir, true);
    std::cout << "report written to " << a.report_dir.string() << "\n";
  }
  return kOk;
}

struct ReportArgs {
  fs::path journal;
  fs::path out;
  bool force = false;
};

int cmd_report(const ReportArgs& a) {
  print_config({{"command", "report"}, {"journal", a.journal.string()}, {"out", a.out.string()}});
  const auto records = lca::SearchJournal::read(a.journal);
  const lca::ReportFiles files = lca::emit_report(records, a.out, a.force);
  std::ifstream summary(files.summary_txt);
  std::cout << summary.rdbuf();
  return kOk;
}

// ---------------------------------------------------------------------------
// op

struct OpArgs {
  std::string name;
  fs::path image;
  fs::path out;
  std::optional<double> magnitude;
  fs::path partner;
  std::string shift;
  std::string axis = "horizontal";
  std::string center;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
  bool force = false;
};

int cmd_op(const OpArgs& a) {
  const lca::ImageU8 image = lca::read_image_file(a.image.string());
  lca::OpDraw d;
  d.kind = lca::parse_operation(a.name);
  const auto& spec = lca::operation_spec(d.kind);
  if (spec.range && d.kind != lca::OperationKind::kColorShift && !a.magnitude) {
    throw lca::ValidationError(std::string(spec.name) + " needs --magnitude");
  }
  d.magnitude = a.magnitude.value_or(0.0);
  if (d.kind == lca::OperationKind::kColorShift) {
    const auto v = parse_double_list(a.shift);
    if (v.size() != 3) throw lca::ValidationError("--shift takes three comma-separated integers");
    for (std::size_t i = 0; i < 3; ++i) d.shift[i] = static_cast<int>(v[i]);
  }
  if (a.axis != "horizontal" && a.axis != "vertical") throw lca::ValidationError("--axis is horizontal or vertical");
  d.axis = a.axis == "horizontal" ? lca::FlipAxis::kHorizontal : lca::FlipAxis::kVertical;
  if (d.kind == lca::OperationKind::kCutout) {
    if (a.center.empty()) {
      d.center_x = image.width() / 2;
      d.center_y = image.height() / 2;
    } else {
      const auto v = parse_double_list(a.center);
      if (v.size() != 2) throw lca::ValidationError("--center takes x,y");
      d.center_x = static_cast<int>(v[0]);
      d.center_y = static_cast<int>(v[1]);
    }
  }
  d.noise_seed = lca::derive_seed(a.seed, "op-noise");
  lca::ImageU8 partner_image;
  lca::BatchContext ctx;
  if (d.kind == lca::OperationKind::kSamplePairing) {
    if (a.partner.empty()) throw lca::ValidationError("SamplePairing needs --partner");
    partner_image = lca::read_image_file(a.partner.string());
    ctx.partners.push_back(&partner_image);
    d.partner = 0;
  }
  print_config({{"command", "op"}, {"draw", lca::to_json(d)}, {"image", a.image.string()}, {"out", a.out.string()}});
  guard_overwrite(a.out, a.force);
  lca::write_image_file(a.out.string(), lca::apply_operation(image, d, ctx, a.noise_scale));
  return kOk;
}

int exit_code_for(const lca::Error& e) {
  switch (e.kind()) {
    case lca::ErrorKind::kValidation:
      return kValidation;
    case lca::ErrorKind::kData:
      return kData;
    case lca::ErrorKind::kTrainer:
      return kTrainer;
    case lca::ErrorKind::kIo:
      return kIo;
  }
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LCA augmentation search toolkit"};
  app.require_subcommand(1);
  std::string log_level = std::getenv("LCA_LOG_LEVEL") ? std::getenv("LCA_LOG_LEVEL") : "info";
  app.add_option("--log-level", log_level, "quiet, info or debug (env LCA_LOG_LEVEL)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic lesion corpus");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--classes", synth.classes, "Number of classes");
  s->add_option("--per-class", synth.per_class, "Images per class");
  s->add_option("--size", synth.size, "Image side in pixels");
  s->add_option("--images-per-lesion", synth.images_per_lesion, "Images sharing one lesion id");
  s->add_option("--seed", synth.seed, "Root seed");
  s->add_flag("--force", synth.force, "Overwrite an existing corpus");

  AugmentArgs aug;
  auto* au = app.add_subcommand("augment", "Apply the LCA policy to one image");
  au->add_option("--image", aug.image, "Input PPM")->required();
  au->add_option("--policy", aug.policy_file, "Policy JSON file");
  au->add_option("--probability", aug.probability, "Override the policy probability");
  au->add_option("--seed", aug.seed, "Policy seed when no policy file is given");
  au->add_option("-n", aug.n, "Number of augmented outputs");
  au->add_option("--out", aug.out, "Output directory")->required();
  au->add_option("--partner", aug.partners, "Partner images for SamplePairing");
  au->add_option("--sub-policy", aug.sub_policy, "Apply this sub-policy id unconditionally (needs --force)");
  au->add_option("--replay", aug.replay, "Reproduce outputs from a records.json log");
  au->add_flag("--force", aug.force, "Bypass the gate for --sub-policy and overwrite outputs");

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Lesion-grouped k-fold split or hold-out split");
  sp->add_option("--manifest", split.manifest, "Manifest CSV")->required();
  sp->add_option("--out", split.out, "Fold assignment JSON");
  sp->add_option("--folds", split.folds, "Number of folds");
  sp->add_option("--seed", split.seed, "Root seed");
  sp->add_option("--holdout-dir", split.holdout_dir, "Write train.csv/test.csv for a 4:1 hold-out split");
  sp->add_flag("--force", split.force, "Overwrite outputs");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train the reference classifier");
  tr->add_option("--manifest", train.manifest, "Training manifest CSV")->required();
  tr->add_option("--out", train.out, "Model JSON")->required();
  tr->add_option("--policy", train.policy_file, "Policy JSON file");
  tr->add_option("--probability", train.probability, "Policy probability");
  tr->add_option("--seed", train.seed, "Root seed");
  train.trainer.add_to(tr);
  tr->add_flag("--force", train.force, "Overwrite the model file");

  EvaluateArgs eval;
  auto* ev = app.add_subcommand("evaluate", "Multi-crop evaluation of a trained model");
  ev->add_option("--model", eval.model, "Model JSON from train")->required();
  ev->add_option("--manifest", eval.manifest, "Evaluation manifest CSV")->required();
  ev->add_option("--out", eval.out, "Output directory")->required();
  ev->add_option("--epoch", eval.epoch, "Checkpoint epoch (default: final)");
  ev->add_option("--crop", eval.crop, "Multi-crop side (default: training crop)");
  ev->add_flag("--force", eval.force, "Overwrite outputs");

  SearchArgs search;
  auto* se = app.add_subcommand("search", "Two-stage augmentation probability search");
  se->add_option("--manifest", search.manifest, "Training manifest CSV (whole corpus without --test-manifest)")
      ->required();
  se->add_option("--test-manifest", search.test_manifest, "Held-out test manifest CSV");
  se->add_option("--grid", search.grid_file, "Grid JSON: ladder, folds, noise_scale, sub_policies, candidates");
  se->add_option("--ladder", search.ladder, "Comma-separated probabilities");
  se->add_option("--external-trainer", search.external, "Shell command of an external trainer candidate");
  se->add_option("--journal", search.journal, "Journal path");
  se->add_option("--report-dir", search.report_dir, "Write reports here when the search completes");
  se->add_option("--seed", search.seed, "Root seed");
  se->add_option("--workers", search.workers, "Worker threads (env LCA_WORKERS; default: all cores)");
  se->add_option("--max-cells", search.max_cells, "Stop after starting this many new cells");
  se->add_option("--trainer-timeout", search.timeout_minutes, "External trainer reply timeout in minutes");
  search.trainer.add_to(se);
  se->add_flag("--resume", search.resume, "Continue an interrupted journal");
  se->add_flag("--force", search.force, "Overwrite an existing journal and reports");

  ReportArgs report;
  auto* re = app.add_subcommand("report", "Emit report files from a journal");
  re->add_option("--journal", report.journal, "Journal path")->required();
  re->add_option("--out", report.out, "Output directory")->required();
  re->add_flag("--force", report.force, "Overwrite reports");

  OpArgs op;
  auto* o = app.add_subcommand("op", "Apply one named transform");
  o->add_option("--name", op.name, "Operation name, e.g. Rotate")->required();
  o->add_option("--image", op.image, "Input PPM")->required();
  o->add_option("--out", op.out, "Output PPM")->required();
  o->add_option("--magnitude", op.magnitude, "Magnitude");
  o->add_option("--partner", op.partner, "Partner PPM for SamplePairing");
  o->add_option("--shift", op.shift, "ColorShift deltas r,g,b");
  o->add_option("--axis", op.axis, "Flip axis: horizontal or vertical");
  o->add_option("--center", op.center, "Cutout center x,y (default: image center)");
  o->add_option("--seed", op.seed, "Seed for GaussianNoise");
  o->add_option("--noise-scale", op.noise_scale, "GaussianNoise sigma multiplier");
  o->add_flag("--force", op.force, "Overwrite the output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    g_log_level = parse_log_level(log_level);
    if (*s) return cmd_synth(synth);
    if (*au) return cmd_augment(aug);
    if (*sp) return cmd_split(split);
    if (*tr) return cmd_train(train);
    if (*ev) return cmd_evaluate(eval);
    if (*se) return cmd_search(search);
    if (*re) return cmd_report(report);
    if (*o) return cmd_op(op);
  } catch (const lca::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
