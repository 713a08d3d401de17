#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lca/image.hpp"
#include "lca/rng.hpp"

namespace lca {

// Ordered class names; index = dense label 0..C-1. Codes match the manifest's dx column.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> codes);

  // MEL, NV, BCC, AKIEC, BKL, DF, VASC.
  static LabelSet ham10000();

  std::size_t size() const noexcept { return codes_.size(); }
  const std::string& code(std::size_t i) const { return codes_.at(i); }
  // Upper-case display name (e.g. "MEL").
  std::string display_name(std::size_t i) const;
  const std::vector<std::string>& codes() const noexcept { return codes_; }
  // Case-insensitive lookup; -1 when absent.
  int find(const std::string& code) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> codes_;
};

struct SampleMeta {
  std::string image_id;
  std::string lesion_id;
  int label = 0;
  std::string path;  // absolute or relative to the working directory
};

struct DatasetManifest {
  LabelSet labels;
  std::vector<SampleMeta> samples;
  std::vector<std::size_t> class_counts;

  std::size_t total() const noexcept { return samples.size(); }
  // Subset by image ids, preserving manifest order.
  DatasetManifest subset(const std::vector<std::string>& image_ids) const;
  void recount();
};

// CSV with header; required columns lesion_id, image_id, dx; optional path.
// Paths default to <base_dir>/images/<image_id>.ppm and relative paths resolve against base_dir.
DatasetManifest load_manifest(std::istream& csv, const LabelSet& labels,
                              const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest_file(const std::filesystem::path& path,
                                   const std::optional<LabelSet>& labels = std::nullopt);
void write_manifest(std::ostream& out, const DatasetManifest& manifest,
                    const std::filesystem::path& base_dir = {});
// labels.txt next to a manifest, one code per line, if present.
std::optional<LabelSet> read_label_file(const std::filesystem::path& path);

struct ClassWeights {
  std::vector<double> w;
};

// w_i = N / n_i.
ClassWeights class_weights(const DatasetManifest& manifest);
ClassWeights class_weights(const std::vector<std::size_t>& counts);

struct FoldAssignment {
  int fold_id = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

// Lesion groups shuffled by seed, dealt round-robin into k buckets; fold f validates on bucket f.
std::vector<FoldAssignment> group_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed);
nlohmann::json to_json(const FoldAssignment& fold);
FoldAssignment fold_from_json(const nlohmann::json& j);

struct CropOffset {
  int x = 0;
  int y = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

ImageU8 crop(const ImageU8& image, CropOffset offset, int width, int height);
ImageU8 random_crop(const ImageU8& image, int size, Rng& rng);

struct SynthSpec {
  int classes = 7;
  std::vector<int> per_class;  // size == classes
  int image_size = 256;
  std::uint64_t seed = 1;
  int images_per_lesion = 1;   // > 1 renders lesions photographed several times
};

// Renders one filled ellipse per image in a class-specific hue over speckle,
// writing <out_dir>/images/<image_id>.ppm, manifest.csv and labels.txt.
DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);
LabelSet synth_labels(int classes);

// Loads images on demand; caches decoded rasters. Safe for concurrent readers.
class ImageStore {
 public:
  explicit ImageStore(bool cache = true) : cache_(cache) {}
  std::shared_ptr<const ImageU8> get(const SampleMeta& sample) const;
  void put(const std::string& image_id, ImageU8 image);

 private:
  bool cache_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const ImageU8>> images_;
};

}  // namespace lca
