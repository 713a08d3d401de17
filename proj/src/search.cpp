#include "lca/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "lca/error.hpp"

namespace lca {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const Candidate& c) {
  return {{"name", c.name},
          {"kind", c.kind == Candidate::Kind::kReference ? "reference" : "external"},
          {"command", c.command},
          {"config", to_json(c.config)}};
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.name = j.value("name", c.name);
  const std::string kind = j.value("kind", std::string("reference"));
  if (kind == "reference") {
    c.kind = Candidate::Kind::kReference;
  } else if (kind == "external") {
    c.kind = Candidate::Kind::kExternal;
  } else {
    throw ValidationError("unknown candidate kind '" + kind + "'");
  }
  c.command = j.value("command", std::string());
  if (j.contains("config")) c.config = trainer_config_from_json(j.at("config"));
  if (c.kind == Candidate::Kind::kExternal && c.command.empty()) {
    throw ValidationError("external candidate '" + c.name + "' has no command");
  }
  return c;
}

void SearchGrid::validate() const {
  if (ladder.empty()) throw ValidationError("search grid needs at least one probability");
  if (candidates.empty()) throw ValidationError("search grid needs at least one candidate");
  if (sub_policies.empty()) throw ValidationError("search grid needs at least one sub-policy");
  if (folds < 2) throw ValidationError("search grid needs at least two folds");
  for (double p : ladder) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("ladder probability outside [0, 1]");
  }
  for (const auto& c : candidates) c.config.validate();
}

// ---------------------------------------------------------------------------
// Journal

namespace {

struct ParsedJournal {
  std::vector<json> records;
  std::size_t valid_bytes = 0;
  bool torn = false;
};

ParsedJournal parse_journal(const fs::path& path) {
  ParsedJournal out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      out.torn = true;  // partial final line from an interrupted write
      break;
    }
    const std::string line = text.substr(pos, nl - pos);
    if (!line.empty()) {
      try {
        out.records.push_back(json::parse(line));
      } catch (const json::exception&) {
        if (nl + 1 >= text.size()) {
          out.torn = true;
          break;
        }
        throw DataError("journal " + path.string() + " has a corrupt record at byte " + std::to_string(pos));
      }
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

}  // namespace

std::vector<json> SearchJournal::read(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("journal " + path.string() + " does not exist");
  return parse_journal(path).records;
}

SearchJournal::SearchJournal(fs::path path, const json& header, bool resume, bool overwrite)
    : path_(std::move(path)) {
  const bool exists = fs::exists(path_) && fs::file_size(path_) > 0;
  if (exists && resume) {
    ParsedJournal parsed = parse_journal(path_);
    if (parsed.torn) fs::resize_file(path_, parsed.valid_bytes);
    if (parsed.records.empty()) {
      fs::resize_file(path_, 0);
    } else {
      const json& old = parsed.records.front();
      if (old.value("type", "") != "header") {
        throw DataError("journal " + path_.string() + " does not start with a header record");
      }
      if (old.value("grid_hash", "") != header.value("grid_hash", "") ||
          old.value("seed", std::uint64_t{0}) != header.value("seed", std::uint64_t{0})) {
        throw ResumeMismatchError("journal " + path_.string() +
                                  " was written for a different grid or seed; refusing to resume");
      }
      records_ = std::move(parsed.records);
      return;
    }
  } else if (exists && !overwrite) {
    throw ValidationError("journal " + path_.string() + " already exists; resume it or pass --force");
  }
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream(path_, std::ios::trunc);
  append(header);
}

void SearchJournal::append(json record) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to journal " + path_.string());
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw IoError("write to journal " + path_.string() + " failed");
  records_.push_back(std::move(record));
}

std::vector<json> SearchJournal::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

// ---------------------------------------------------------------------------
// Outcome reconstruction

namespace {

json pairs_to_json(const std::vector<std::pair<int, double>>& v) {
  json a = json::array();
  for (const auto& [e, b] : v) a.push_back({e, b});
  return a;
}

std::vector<std::pair<int, double>> pairs_from_json(const json& a) {
  std::vector<std::pair<int, double>> v;
  for (const auto& p : a) v.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
  return v;
}

json fold_to_json(const FoldResult& f) {
  return {{"fold", f.fold},
          {"best_bacc", f.best_bacc},
          {"best_epoch", f.best_epoch},
          {"bacc_by_epoch", pairs_to_json(f.bacc_by_epoch)}};
}

FoldResult fold_from_json_record(const json& j) {
  FoldResult f;
  f.fold = j.at("fold").get<int>();
  f.best_bacc = j.at("best_bacc").get<double>();
  f.best_epoch = j.at("best_epoch").get<int>();
  f.bacc_by_epoch = pairs_from_json(j.at("bacc_by_epoch"));
  return f;
}

json stage2_to_json(const Stage2Result& r) {
  json j{{"candidate", r.candidate}, {"failed", r.failed}};
  if (r.failed) {
    j["error"] = r.error;
    return j;
  }
  j["bacc_by_epoch"] = pairs_to_json(r.bacc_by_epoch);
  j["best_epoch"] = r.best_epoch;
  j["best_bacc"] = r.best_bacc;
  j["report"] = r.report ? to_json(*r.report) : json(nullptr);
  j["report_error"] = r.report_error;
  return j;
}

Stage2Result stage2_from_json(const json& j) {
  Stage2Result r;
  r.candidate = j.at("candidate").get<std::size_t>();
  r.failed = j.value("failed", false);
  if (r.failed) {
    r.error = j.value("error", std::string());
    return r;
  }
  r.bacc_by_epoch = pairs_from_json(j.at("bacc_by_epoch"));
  r.best_epoch = j.at("best_epoch").get<int>();
  r.best_bacc = j.at("best_bacc").get<double>();
  if (!j.at("report").is_null()) r.report = metrics_report_from_json(j.at("report"));
  r.report_error = j.value("report_error", std::string());
  return r;
}

const json& header_of(const std::vector<json>& records) {
  if (records.empty() || records.front().value("type", "") != "header") {
    throw DataError("journal has no header record");
  }
  return records.front();
}

std::vector<double> ladder_of(const json& header) { return header.at("grid").at("ladder").get<std::vector<double>>(); }

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

SearchOutcome outcome_from_records(const std::vector<json>& records) {
  const json& header = header_of(records);
  const auto ladder = ladder_of(header);
  std::map<std::pair<std::size_t, std::size_t>, CellResult> cells;
  std::map<std::size_t, Stage2Result> stage2;
  SearchOutcome out;
  for (const auto& r : records) {
    const std::string type = r.value("type", "");
    if (type == "cell_finished" || type == "cell_failed") {
      CellResult c;
      c.candidate = r.at("candidate").get<std::size_t>();
      const auto pidx = r.at("p_index").get<std::size_t>();
      c.probability = ladder.at(pidx);
      c.failed = type == "cell_failed";
      if (c.failed) {
        c.error = r.value("error", std::string());
      } else {
        for (const auto& f : r.at("folds")) c.folds.push_back(fold_from_json_record(f));
        c.score = r.at("score").get<double>();
      }
      cells[{c.candidate, pidx}] = std::move(c);
    } else if (type == "stage1_selection") {
      out.winner_candidate = r.at("candidate").get<std::size_t>();
      out.winner_probability = ladder.at(r.at("p_index").get<std::size_t>());
    } else if (type == "stage2_finished" || type == "stage2_failed") {
      Stage2Result s = stage2_from_json(r.at("result"));
      stage2[s.candidate] = std::move(s);
    } else if (type == "selection") {
      out.final_candidate = r.at("candidate").get<std::size_t>();
      out.complete = true;
    }
  }
  for (auto& [key, c] : cells) out.cells.push_back(std::move(c));
  for (auto& [key, s] : stage2) out.stage2.push_back(std::move(s));
  return out;
}

json journal_digest(const std::vector<json>& records) {
  const SearchOutcome o = outcome_from_records(records);
  json cells = json::array();
  for (const auto& c : o.cells) {
    json folds = json::array();
    for (const auto& f : c.folds) folds.push_back(fold_to_json(f));
    cells.push_back({{"candidate", c.candidate},
                     {"p", c.probability},
                     {"failed", c.failed},
                     {"error", c.error},
                     {"score", c.score},
                     {"folds", folds}});
  }
  json stage2 = json::array();
  for (const auto& s : o.stage2) stage2.push_back(stage2_to_json(s));
  return {{"header", header_of(records)},
          {"cells", cells},
          {"winner_candidate", o.winner_candidate ? json(*o.winner_candidate) : json(nullptr)},
          {"winner_p", o.winner_probability ? json(*o.winner_probability) : json(nullptr)},
          {"stage2", stage2},
          {"final_candidate", o.final_candidate ? json(*o.final_candidate) : json(nullptr)}};
}

std::optional<std::size_t> select_winner(const std::vector<CellResult>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellResult& c = cells[i];
    if (c.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const CellResult& b = cells[*best];
    if (c.score > b.score || (c.score == b.score && (c.probability < b.probability ||
                                                      (c.probability == b.probability && c.candidate < b.candidate)))) {
      best = i;
    }
  }
  return best;
}

std::pair<DatasetManifest, DatasetManifest> holdout_split(const DatasetManifest& manifest, std::uint64_t seed) {
  const auto folds = group_kfold(manifest, 5, derive_seed(seed, "holdout"));
  return {manifest.subset(folds[0].train_ids), manifest.subset(folds[0].val_ids)};
}

// ---------------------------------------------------------------------------
// Search

namespace {

std::string fnv_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(s)));
  return buf;
}

json manifest_fingerprint(const DatasetManifest& m) {
  std::string s;
  for (const auto& x : m.samples) s += x.image_id + "|" + x.lesion_id + "|" + std::to_string(x.label) + "\n";
  return {{"size", m.samples.size()}, {"hash", fnv_hex(s)}};
}

json grid_json(const SearchGrid& g) {
  json cands = json::array();
  for (const auto& c : g.candidates) cands.push_back(to_json(c));
  json subs = json::array();
  for (const auto& s : g.sub_policies) {
    subs.push_back({{"id", s.id}, {"color_op", operation_name(s.color_op)}, {"geom_op", operation_name(s.geom_op)}});
  }
  return {{"ladder", g.ladder},
          {"candidates", cands},
          {"sub_policies", subs},
          {"noise_scale", g.noise_scale},
          {"folds", g.folds},
          {"seed", g.seed}};
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first escaped exception.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  const auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

class SearchRun {
 public:
  SearchRun(const DatasetManifest& train, const DatasetManifest& test, const SearchGrid& grid,
            const ImageStore& store, const SearchOptions& options)
      : train_(train), test_(test), grid_(grid), store_(store), options_(options) {}

  SearchOutcome run() {
    grid_.validate();
    if (train_.labels.size() != test_.labels.size()) throw ValidationError("train and test label sets differ");
    json names = json::array();
    for (std::size_t i = 0; i < train_.labels.size(); ++i) names.push_back(train_.labels.display_name(i));
    json header{{"type", "header"},
                {"version", 1},
                {"seed", grid_.seed},
                {"grid", grid_json(grid_)},
                {"labels", names},
                {"train", manifest_fingerprint(train_)},
                {"test", manifest_fingerprint(test_)}};
    header["grid_hash"] = fnv_hex(header.dump());
    journal_.emplace(options_.journal_path, header, options_.resume, options_.overwrite);

    SearchOutcome so_far = outcome_from_records(journal_->records());
    if (so_far.complete) {
      log("journal already complete; nothing to do");
      return so_far;
    }
    if (!run_stage1()) return outcome_from_records(journal_->records());
    run_stage2();
    return outcome_from_records(journal_->records());
  }

 private:
  void log(const std::string& msg) const {
    if (options_.log) options_.log(msg);
  }

  std::unique_ptr<Classifier> make_classifier(const Candidate& c) const {
    if (c.kind == Candidate::Kind::kExternal) {
      return std::make_unique<ExternalClassifier>(c.command, options_.external);
    }
    return std::make_unique<ReferenceClassifier>(store_);
  }

  std::string cell_name(std::size_t cand, std::size_t pidx) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "P=%g", grid_.ladder[pidx]);
    return grid_.candidates[cand].name + "/" + buf;
  }

  json cell_identity(std::size_t cand, std::size_t pidx) const {
    return {{"seed", grid_.seed}, {"candidate", cand}, {"p_index", pidx}, {"p", grid_.ladder[pidx]}};
  }

  LcaPolicy policy_for(double p, std::uint64_t seed) const {
    LcaPolicy policy;
    policy.sub_policies = grid_.sub_policies;
    policy.probability = p;
    policy.seed = seed;
    policy.noise_scale = grid_.noise_scale;
    return policy;
  }

  // Best-checkpoint BACC of one trained classifier on an evaluation set.
  std::vector<std::pair<int, double>> evaluate(Classifier& clf, const DatasetManifest& eval,
                                               std::vector<std::vector<ProbVector>>* scores_out) const {
    std::vector<int> truths;
    for (const auto& s : eval.samples) truths.push_back(s.label);
    std::vector<std::pair<int, double>> out;
    for (int epoch : clf.checkpoint_epochs()) {
      std::vector<ProbVector> scores;
      scores.reserve(eval.samples.size());
      for (const auto& s : eval.samples) scores.push_back(clf.predict(s, epoch));
      const auto preds = argmax_predictions(scores);
      out.emplace_back(epoch, bacc(confusion(truths, preds, static_cast<int>(eval.labels.size()))));
      if (scores_out) scores_out->push_back(std::move(scores));
    }
    return out;
  }

  static std::size_t best_index(const std::vector<std::pair<int, double>>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i].second > v[best].second) best = i;
    }
    return best;
  }

  void require_all_classes(const DatasetManifest& m, const std::string& where) const {
    for (std::size_t c = 0; c < m.class_counts.size(); ++c) {
      if (m.class_counts[c] == 0) {
        throw DataError("class " + m.labels.display_name(c) + " is absent from " + where);
      }
    }
  }

  FoldResult run_fold(std::size_t cand, std::size_t pidx, const FoldAssignment& fold) const {
    const Candidate& c = grid_.candidates[cand];
    const DatasetManifest fold_train = train_.subset(fold.train_ids);
    const DatasetManifest fold_val = train_.subset(fold.val_ids);
    require_all_classes(fold_val, "the validation side of fold " + std::to_string(fold.fold_id));
    require_all_classes(fold_train, "the training side of fold " + std::to_string(fold.fold_id));
    const auto f = static_cast<std::uint64_t>(fold.fold_id);
    FitRequest req;
    req.run_id = cell_name(cand, pidx) + "/fold" + std::to_string(fold.fold_id);
    req.train = &fold_train;
    req.policy = policy_for(grid_.ladder[pidx], derive_seed(grid_.seed, "policy", {cand, pidx, f}));
    req.config = c.config;
    req.config.seed = derive_seed(grid_.seed, "train", {cand, pidx, f});
    req.weights = class_weights(fold_train);
    auto clf = make_classifier(c);
    clf->fit(req);
    FoldResult r;
    r.fold = fold.fold_id;
    r.bacc_by_epoch = evaluate(*clf, fold_val, nullptr);
    if (r.bacc_by_epoch.empty()) throw TrainerError("run " + req.run_id + " produced no checkpoints");
    const auto& best = r.bacc_by_epoch[best_index(r.bacc_by_epoch)];
    r.best_epoch = best.first;
    r.best_bacc = best.second;
    return r;
  }

  void run_cell(std::size_t cand, std::size_t pidx) {
    json id = cell_identity(cand, pidx);
    json started = id;
    started["type"] = "cell_started";
    journal_->append(started);
    log("cell " + cell_name(cand, pidx) + " started");
    try {
      std::vector<FoldResult> results;
      json folds = json::array();
      double sum = 0.0;
      for (const auto& fold : folds_) {
        FoldResult r = run_fold(cand, pidx, fold);
        json rec = id;
        rec["type"] = "fold_result";
        rec["fold"] = r.fold;
        rec["result"] = fold_to_json(r);
        journal_->append(rec);
        sum += r.best_bacc;
        folds.push_back(fold_to_json(r));
        results.push_back(std::move(r));
      }
      json done = id;
      done["type"] = "cell_finished";
      done["folds"] = folds;
      done["score"] = sum / static_cast<double>(results.size());
      journal_->append(done);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", done["score"].get<double>());
      log("cell " + cell_name(cand, pidx) + " finished, score " + buf);
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      json failed = id;
      failed["type"] = "cell_failed";
      failed["error"] = e.what();
      journal_->append(failed);
      log("cell " + cell_name(cand, pidx) + " failed: " + e.what());
    }
  }

  // Returns false if interrupted before every cell finished.
  bool run_stage1() {
    folds_ = group_kfold(train_, grid_.folds, derive_seed(grid_.seed, "folds"));
    const SearchOutcome so_far = outcome_from_records(journal_->records());
    std::set<std::pair<std::size_t, std::size_t>> done;
    for (const auto& c : so_far.cells) {
      const auto pidx = static_cast<std::size_t>(
          std::find(grid_.ladder.begin(), grid_.ladder.end(), c.probability) - grid_.ladder.begin());
      done.insert({c.candidate, pidx});
    }
    std::vector<std::pair<std::size_t, std::size_t>> pending;
    for (std::size_t cand = 0; cand < grid_.candidates.size(); ++cand) {
      for (std::size_t pidx = 0; pidx < grid_.ladder.size(); ++pidx) {
        if (!done.count({cand, pidx})) pending.emplace_back(cand, pidx);
      }
    }
    bool interrupted = false;
    if (options_.max_new_cells && *options_.max_new_cells < pending.size()) {
      pending.resize(*options_.max_new_cells);
      interrupted = true;
    }
    if (!pending.empty()) {
      log("stage 1: " + std::to_string(pending.size()) + " cell(s) to run");
    }
    parallel_for(pending.size(), options_.workers,
                 [&](std::size_t i) { run_cell(pending[i].first, pending[i].second); });
    if (interrupted) {
      log("stopped after " + std::to_string(pending.size()) + " new cell(s); resume to continue");
      return false;
    }

    SearchOutcome stage1 = outcome_from_records(journal_->records());
    const auto winner = select_winner(stage1.cells);
    if (!winner) throw DataError("every stage-1 cell failed; no augmentation probability can be selected");
    const CellResult& w = stage1.cells[*winner];
    const auto pidx = static_cast<std::size_t>(
        std::find(grid_.ladder.begin(), grid_.ladder.end(), w.probability) - grid_.ladder.begin());
    if (!stage1.winner_candidate) {
      json sel = cell_identity(w.candidate, pidx);
      sel["type"] = "stage1_selection";
      sel["score"] = w.score;
      journal_->append(sel);
    }
    winner_p_ = w.probability;
    log("stage 1 winner: " + cell_name(w.candidate, pidx));
    return true;
  }

  Stage2Result run_candidate(std::size_t cand) const {
    Stage2Result r;
    r.candidate = cand;
    const Candidate& c = grid_.candidates[cand];
    require_all_classes(test_, "the test set");
    FitRequest req;
    req.run_id = c.name + "/stage2";
    req.train = &train_;
    req.policy = policy_for(winner_p_, derive_seed(grid_.seed, "stage2-policy", {cand}));
    req.config = c.config;
    req.config.seed = derive_seed(grid_.seed, "stage2-train", {cand});
    req.weights = class_weights(train_);
    auto clf = make_classifier(c);
    clf->fit(req);
    std::vector<std::vector<ProbVector>> scores;
    r.bacc_by_epoch = evaluate(*clf, test_, &scores);
    if (r.bacc_by_epoch.empty()) throw TrainerError("run " + req.run_id + " produced no checkpoints");
    const std::size_t best = best_index(r.bacc_by_epoch);
    r.best_epoch = r.bacc_by_epoch[best].first;
    r.best_bacc = r.bacc_by_epoch[best].second;
    std::vector<int> truths;
    for (const auto& s : test_.samples) truths.push_back(s.label);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < test_.labels.size(); ++i) names.push_back(test_.labels.display_name(i));
    try {
      r.report = full_report(scores[best], truths, names);
    } catch (const UndefinedMetricError& e) {
      r.report_error = e.what();
    }
    return r;
  }

  void run_stage2() {
    const SearchOutcome so_far = outcome_from_records(journal_->records());
    std::set<std::size_t> done;
    for (const auto& s : so_far.stage2) done.insert(s.candidate);
    std::vector<std::size_t> pending;
    for (std::size_t cand = 0; cand < grid_.candidates.size(); ++cand) {
      if (!done.count(cand)) pending.push_back(cand);
    }
    parallel_for(pending.size(), options_.workers, [&](std::size_t i) {
      const std::size_t cand = pending[i];
      journal_->append({{"type", "stage2_started"}, {"seed", grid_.seed}, {"candidate", cand}});
      Stage2Result r;
      try {
        r = run_candidate(cand);
      } catch (const IoError&) {
        throw;
      } catch (const std::exception& e) {
        r = Stage2Result{};
        r.candidate = cand;
        r.failed = true;
        r.error = e.what();
        log("stage 2 candidate " + grid_.candidates[cand].name + " failed: " + e.what());
      }
      for (const auto& [epoch, b] : r.bacc_by_epoch) {
        journal_->append({{"type", "stage2_checkpoint"},
                          {"seed", grid_.seed},
                          {"candidate", cand},
                          {"epoch", epoch},
                          {"bacc", b}});
      }
      journal_->append({{"type", r.failed ? "stage2_failed" : "stage2_finished"},
                        {"seed", grid_.seed},
                        {"candidate", cand},
                        {"result", stage2_to_json(r)}});
    });
    const SearchOutcome all = outcome_from_records(journal_->records());
    std::optional<std::size_t> best;
    for (const auto& s : all.stage2) {
      if (s.failed) continue;
      if (!best || s.best_bacc > all.stage2[*best].best_bacc) {
        best = static_cast<std::size_t>(&s - all.stage2.data());
      }
    }
    if (!best) throw TrainerError("every stage-2 candidate failed");
    const Stage2Result& b = all.stage2[*best];
    journal_->append({{"type", "selection"},
                      {"seed", grid_.seed},
                      {"candidate", b.candidate},
                      {"name", grid_.candidates[b.candidate].name},
                      {"p", winner_p_},
                      {"best_epoch", b.best_epoch},
                      {"test_bacc", b.best_bacc}});
    log("selected " + grid_.candidates[b.candidate].name + " (test BACC " + std::to_string(b.best_bacc) + ")");
  }

  const DatasetManifest& train_;
  const DatasetManifest& test_;
  const SearchGrid& grid_;
  const ImageStore& store_;
  const SearchOptions& options_;
  std::optional<SearchJournal> journal_;
  std::vector<FoldAssignment> folds_;
  double winner_p_ = 0.0;
};

}  // namespace

SearchOutcome run_search(const DatasetManifest& train, const DatasetManifest& test, const SearchGrid& grid,
                         const ImageStore& store, const SearchOptions& options) {
  return SearchRun(train, test, grid, store, options).run();
}

// ---------------------------------------------------------------------------
// Reports

std::string stage1_matrix_csv(const std::vector<json>& records) {
  const json& header = header_of(records);
  const auto ladder = ladder_of(header);
  const auto& cands = header.at("grid").at("candidates");
  const SearchOutcome o = outcome_from_records(records);
  std::string out = "Candidate";
  char buf[64];
  for (double p : ladder) {
    std::snprintf(buf, sizeof buf, ",P=%g", p);
    out += buf;
  }
  out += "\n";
  for (std::size_t cand = 0; cand < cands.size(); ++cand) {
    out += cands[cand].at("name").get<std::string>();
    for (double p : ladder) {
      out += ",";
      for (const auto& c : o.cells) {
        if (c.candidate != cand || c.probability != p) continue;
        if (c.failed) {
          out += "failed";
        } else {
          std::vector<double> v;
          for (const auto& f : c.folds) v.push_back(f.best_bacc);
          std::snprintf(buf, sizeof buf, "%.3f±%.3f", c.score, population_std(v));
          out += buf;
        }
      }
    }
    out += "\n";
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text, bool overwrite) {
  if (fs::exists(path) && !overwrite) {
    throw ValidationError(path.string() + " already exists; pass --force to overwrite");
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace

ReportFiles emit_report(const std::vector<json>& records, const fs::path& out_dir, bool overwrite) {
  const json& header = header_of(records);
  const SearchOutcome o = outcome_from_records(records);
  if (o.cells.empty()) throw DataError("journal has no finished stage-1 cells; nothing to report");
  const auto ladder = ladder_of(header);
  const auto& grid = header.at("grid");
  const auto& cands = grid.at("candidates");
  fs::create_directories(out_dir);
  ReportFiles files{out_dir / "stage1_matrix.csv", out_dir / "stage2_metrics.csv", out_dir / "report.json",
                    out_dir / "summary.txt"};
  for (const auto& p : {files.stage1_csv, files.stage2_csv, files.bundle_json, files.summary_txt}) {
    if (fs::exists(p) && !overwrite) {
      throw ValidationError(p.string() + " already exists; pass --force to overwrite");
    }
  }

  const std::size_t sub_policies = grid.at("sub_policies").size();
  const std::size_t grid_cells = cands.size() * ladder.size();
  const int k = grid.at("folds").get<int>();

  const Stage2Result* selected = nullptr;
  if (o.final_candidate) {
    for (const auto& s : o.stage2) {
      if (s.candidate == *o.final_candidate) selected = &s;
    }
  }

  write_text(files.stage1_csv, stage1_matrix_csv(records), true);
  if (selected && selected->report) {
    write_text(files.stage2_csv, metrics_csv(*selected->report), true);
  } else {
    // Header-only table keeps the file shape stable when no full report exists.
    std::string csv = "Category Metrics,Mean Value";
    for (const auto& n : header.at("labels")) csv += "," + n.get<std::string>();
    csv += "\n";
    write_text(files.stage2_csv, csv, true);
  }

  json digest = journal_digest(records);
  digest["search_space_size"] = sub_policies * ladder.size();
  digest["grid_cells"] = grid_cells;
  digest["stage1_training_runs"] = grid_cells * static_cast<std::size_t>(k);
  write_text(files.bundle_json, digest.dump(2) + "\n", true);

  std::ostringstream s;
  char buf[160];
  s << "Augmentation search summary\n";
  s << "  seed: " << header.at("seed").get<std::uint64_t>() << "\n";
  s << "  search space: " << sub_policies << " sub-policies x " << ladder.size()
    << " probabilities = " << sub_policies * ladder.size() << "\n";
  s << "  stage-1 grid: " << cands.size() << " candidate(s) x " << ladder.size() << " probabilities = " << grid_cells
    << " cells, " << grid_cells * static_cast<std::size_t>(k) << " training runs (" << k << " folds)\n";
  std::size_t failed = 0;
  for (const auto& c : o.cells) failed += c.failed ? 1 : 0;
  s << "  cells finished: " << o.cells.size() - failed << ", failed: " << failed << "\n";
  if (o.winner_candidate && o.winner_probability) {
    for (const auto& c : o.cells) {
      if (c.candidate == *o.winner_candidate && c.probability == *o.winner_probability) {
        std::snprintf(buf, sizeof buf, "  stage-1 winner: %s at P=%g (mean fold BACC %.4f)\n",
                      cands[*o.winner_candidate].at("name").get<std::string>().c_str(), *o.winner_probability,
                      c.score);
        s << buf;
      }
    }
  } else {
    s << "  stage 1 incomplete\n";
  }
  for (const auto& st : o.stage2) {
    const std::string name = cands[st.candidate].at("name").get<std::string>();
    if (st.failed) {
      s << "  stage-2 " << name << ": failed (" << st.error << ")\n";
    } else {
      std::snprintf(buf, sizeof buf, "  stage-2 %s: best test BACC %.4f at epoch %d\n", name.c_str(), st.best_bacc,
                    st.best_epoch);
      s << buf;
      if (!st.report_error.empty()) s << "    per-class report unavailable: " << st.report_error << "\n";
    }
  }
  if (selected) {
    std::snprintf(buf, sizeof buf, "  selected model: %s (test BACC %.4f)\n",
                  cands[selected->candidate].at("name").get<std::string>().c_str(), selected->best_bacc);
    s << buf;
  } else {
    s << "  search incomplete: no final selection yet\n";
  }
  write_text(files.summary_txt, s.str(), true);
  return files;
}

}  // namespace lca
