#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lca/classifier.hpp"
#include "lca/dataset.hpp"
#include "lca/external.hpp"
#include "lca/metrics.hpp"
#include "lca/policy.hpp"

namespace lca {

struct Candidate {
  enum class Kind { kReference, kExternal };

  std::string name = "reference";
  Kind kind = Kind::kReference;
  std::string command;  // external trainers only
  TrainerConfig config;
};

nlohmann::json to_json(const Candidate& candidate);
Candidate candidate_from_json(const nlohmann::json& j);

struct SearchGrid {
  std::vector<double> ladder = probability_ladder();
  std::vector<Candidate> candidates{Candidate{}};
  std::vector<SubPolicy> sub_policies = lca_default();
  double noise_scale = 1.0;
  int folds = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Append-only JSON-lines journal. One writer at a time; every append is flushed.
class SearchJournal {
 public:
  // Opens `path`. With resume, existing records are loaded (a torn trailing line is dropped)
  // and the header must match; without resume an existing non-empty journal needs `overwrite`.
  SearchJournal(std::filesystem::path path, const nlohmann::json& header, bool resume, bool overwrite);

  void append(nlohmann::json record);
  std::vector<nlohmann::json> records() const;
  const std::filesystem::path& path() const noexcept { return path_; }

  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> records_;
};

struct FoldResult {
  int fold = 0;
  double best_bacc = 0.0;
  int best_epoch = 0;
  std::vector<std::pair<int, double>> bacc_by_epoch;
};

struct CellResult {
  std::size_t candidate = 0;
  double probability = 0.0;
  bool failed = false;
  std::string error;
  std::vector<FoldResult> folds;
  double score = 0.0;  // mean of the per-fold best BACCs
};

struct Stage2Result {
  std::size_t candidate = 0;
  bool failed = false;
  std::string error;
  std::vector<std::pair<int, double>> bacc_by_epoch;
  int best_epoch = 0;
  double best_bacc = 0.0;
  std::optional<MetricsReport> report;  // full report at the best checkpoint
  std::string report_error;
};

struct SearchOutcome {
  bool complete = false;
  std::vector<CellResult> cells;  // finished or failed, ordered by (candidate, ladder index)
  std::optional<std::size_t> winner_candidate;
  std::optional<double> winner_probability;
  std::vector<Stage2Result> stage2;
  std::optional<std::size_t> final_candidate;
};

struct SearchOptions {
  std::filesystem::path journal_path = "search_journal.jsonl";
  int workers = 1;
  bool resume = false;
  bool overwrite = false;
  // Stop (as if interrupted) after this many cells have been started in this invocation.
  std::optional<std::size_t> max_new_cells;
  ExternalOptions external;
  std::function<void(const std::string&)> log;
};

// Winner over finished cells: highest score, then smaller P, then earlier candidate.
std::optional<std::size_t> select_winner(const std::vector<CellResult>& cells);

// Lesion-grouped 4:1 hold-out split used when no separate test manifest is given.
std::pair<DatasetManifest, DatasetManifest> holdout_split(const DatasetManifest& manifest, std::uint64_t seed);

// Stage 1 (grid x k-fold, best checkpoint BACC per fold) then stage 2 (full training set,
// multi-crop test BACC per checkpoint). Resumable from the journal.
SearchOutcome run_search(const DatasetManifest& train, const DatasetManifest& test, const SearchGrid& grid,
                         const ImageStore& store, const SearchOptions& options);

// Rebuilds an outcome purely from journal records.
SearchOutcome outcome_from_records(const std::vector<nlohmann::json>& records);

// Order-independent canonical view: finished cells, stage-2 results, selections.
nlohmann::json journal_digest(const std::vector<nlohmann::json>& records);

struct ReportFiles {
  std::filesystem::path stage1_csv;
  std::filesystem::path stage2_csv;
  std::filesystem::path bundle_json;
  std::filesystem::path summary_txt;
};

// Stage-1 candidate x P matrix (mean±std of fold BACCs, population std), stage-2 per-class
// metrics of the selected model, a JSON bundle and a text summary.
ReportFiles emit_report(const std::vector<nlohmann::json>& records, const std::filesystem::path& out_dir,
                        bool overwrite);
std::string stage1_matrix_csv(const std::vector<nlohmann::json>& records);

}  // namespace lca
