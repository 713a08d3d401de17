#include "lca/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lca/error.hpp"

namespace lca {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> codes) : codes_(std::move(codes)) {
  std::set<std::string> seen;
  for (auto& c : codes_) {
    c = lower(trim(c));
    if (c.empty()) throw ValidationError("empty class code in label set");
    if (!seen.insert(c).second) throw ValidationError("duplicate class code '" + c + "'");
  }
}

LabelSet LabelSet::ham10000() { return LabelSet({"mel", "nv", "bcc", "akiec", "bkl", "df", "vasc"}); }

std::string LabelSet::display_name(std::size_t i) const {
  std::string s = code(i);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

int LabelSet::find(const std::string& code) const {
  const std::string key = lower(trim(code));
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i] == key) return static_cast<int>(i);
  }
  return -1;
}

void DatasetManifest::recount() {
  class_counts.assign(labels.size(), 0);
  for (const auto& s : samples) ++class_counts.at(static_cast<std::size_t>(s.label));
}

DatasetManifest DatasetManifest::subset(const std::vector<std::string>& image_ids) const {
  const std::unordered_set<std::string> keep(image_ids.begin(), image_ids.end());
  DatasetManifest out;
  out.labels = labels;
  for (const auto& s : samples) {
    if (keep.count(s.image_id)) out.samples.push_back(s);
  }
  out.recount();
  return out;
}

DatasetManifest load_manifest(std::istream& csv, const LabelSet& labels, const fs::path& base_dir) {
  if (labels.size() < 2) throw ValidationError("a label set needs at least two classes");
  std::string line;
  if (!std::getline(csv, line)) {
    throw ManifestError(ManifestErrorCode::kMissingColumn, "manifest is empty (no header row)");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[lower(header[i])] = i;
  for (const char* required : {"lesion_id", "image_id", "dx"}) {
    if (!col.count(required)) {
      throw ManifestError(ManifestErrorCode::kMissingColumn,
                          std::string("manifest is missing required column '") + required + "'");
    }
  }
  const std::size_t c_lesion = col["lesion_id"];
  const std::size_t c_image = col["image_id"];
  const std::size_t c_dx = col["dx"];
  const bool has_path = col.count("path") != 0;
  const std::size_t c_path = has_path ? col["path"] : 0;

  DatasetManifest m;
  m.labels = labels;
  std::unordered_set<std::string> ids;
  std::size_t row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    const std::size_t need = std::max({c_lesion, c_image, c_dx, has_path ? c_path : 0}) + 1;
    if (f.size() < need) {
      throw ManifestError(ManifestErrorCode::kMalformed,
                          "manifest row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                              " fields, expected at least " + std::to_string(need));
    }
    SampleMeta s;
    s.image_id = f[c_image];
    s.lesion_id = f[c_lesion];
    if (s.image_id.empty() || s.lesion_id.empty()) {
      throw ManifestError(ManifestErrorCode::kMalformed,
                          "manifest row " + std::to_string(row) + " has an empty image_id or lesion_id");
    }
    s.label = labels.find(f[c_dx]);
    if (s.label < 0) {
      throw ManifestError(ManifestErrorCode::kUnknownLabel,
                          "manifest row " + std::to_string(row) + ": unknown dx value '" + f[c_dx] + "'");
    }
    if (!ids.insert(s.image_id).second) {
      throw ManifestError(ManifestErrorCode::kDuplicateImageId,
                          "manifest row " + std::to_string(row) + ": duplicate image_id '" + s.image_id + "'");
    }
    fs::path p = has_path && !f[c_path].empty() ? fs::path(f[c_path])
                                                : fs::path("images") / (s.image_id + ".ppm");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    s.path = p.string();
    m.samples.push_back(std::move(s));
  }
  m.recount();
  return m;
}

std::optional<LabelSet> read_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::vector<std::string> codes;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) codes.push_back(trim(line));
  }
  return LabelSet(codes);
}

DatasetManifest load_manifest_file(const fs::path& path, const std::optional<LabelSet>& labels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path dir = path.parent_path();
  LabelSet set = labels ? *labels
                        : read_label_file(dir / "labels.txt").value_or(LabelSet::ham10000());
  try {
    return load_manifest(in, set, dir);
  } catch (const ManifestError& e) {
    throw ManifestError(e.code(), path.string() + ": " + e.what());
  }
}

void write_manifest(std::ostream& out, const DatasetManifest& m, const fs::path& base_dir) {
  out << "lesion_id,image_id,dx,path\n";
  for (const auto& s : m.samples) {
    std::string p = s.path;
    if (!base_dir.empty()) {
      const fs::path rel = fs::path(s.path).lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel.string();
    }
    out << csv_field(s.lesion_id) << ',' << csv_field(s.image_id) << ','
        << m.labels.code(static_cast<std::size_t>(s.label)) << ',' << csv_field(p) << '\n';
  }
}

ClassWeights class_weights(const std::vector<std::size_t>& counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  ClassWeights w;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      throw DataError("class " + std::to_string(i) + " has no samples; its weight N/n_i is undefined");
    }
    w.w.push_back(static_cast<double>(n) / static_cast<double>(counts[i]));
  }
  return w;
}

ClassWeights class_weights(const DatasetManifest& manifest) {
  try {
    return class_weights(manifest.class_counts);
  } catch (const DataError&) {
    for (std::size_t i = 0; i < manifest.class_counts.size(); ++i) {
      if (manifest.class_counts[i] == 0) {
        throw DataError("class " + manifest.labels.display_name(i) +
                        " has no samples; its weight N/n_i is undefined");
      }
    }
    throw;
  }
}

std::vector<FoldAssignment> group_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("group_kfold needs k >= 2");
  std::vector<std::string> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (const auto& s : manifest.samples) {
    if (group_of.emplace(s.lesion_id, groups.size()).second) groups.push_back(s.lesion_id);
  }
  if (groups.size() < static_cast<std::size_t>(k)) {
    throw DataError("group_kfold: " + std::to_string(groups.size()) + " lesion groups, need at least " +
                    std::to_string(k));
  }
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<int> bucket(groups.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    bucket[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  std::vector<FoldAssignment> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) folds[static_cast<std::size_t>(f)].fold_id = f;
  for (const auto& s : manifest.samples) {
    const int b = bucket[group_of[s.lesion_id]];
    for (int f = 0; f < k; ++f) {
      auto& fold = folds[static_cast<std::size_t>(f)];
      (b == f ? fold.val_ids : fold.train_ids).push_back(s.image_id);
    }
  }
  return folds;
}

json to_json(const FoldAssignment& fold) {
  return {{"fold_id", fold.fold_id}, {"train_ids", fold.train_ids}, {"val_ids", fold.val_ids}};
}

FoldAssignment fold_from_json(const json& j) {
  FoldAssignment f;
  f.fold_id = j.at("fold_id").get<int>();
  f.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  f.val_ids = j.at("val_ids").get<std::vector<std::string>>();
  return f;
}

ImageU8 crop(const ImageU8& image, CropOffset offset, int width, int height) {
  if (offset.x < 0 || offset.y < 0 || offset.x + width > image.width() ||
      offset.y + height > image.height()) {
    throw ValidationError("crop rectangle exceeds image bounds");
  }
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  const auto src = image.bytes();
  const std::size_t row_bytes = static_cast<std::size_t>(width) * 3;
  for (int y = 0; y < height; ++y) {
    const std::size_t from =
        (static_cast<std::size_t>(offset.y + y) * static_cast<std::size_t>(image.width()) +
         static_cast<std::size_t>(offset.x)) * 3;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * row_bytes));
  }
  return ImageU8(width, height, std::move(data));
}

ImageU8 random_crop(const ImageU8& image, int size, Rng& rng) {
  if (size < 1) throw ValidationError("crop size must be positive");
  if (image.width() < size || image.height() < size) {
    throw ValidationError("image " + std::to_string(image.width()) + "x" +
                          std::to_string(image.height()) + " is smaller than crop size " +
                          std::to_string(size));
  }
  const int ox = static_cast<int>(rng.uniform_int(0, image.width() - size));
  const int oy = static_cast<int>(rng.uniform_int(0, image.height() - size));
  return crop(image, {ox, oy}, size, size);
}

LabelSet synth_labels(int classes) {
  if (classes <= 7) {
    auto codes = LabelSet::ham10000().codes();
    codes.resize(static_cast<std::size_t>(classes));
    return LabelSet(codes);
  }
  std::vector<std::string> codes;
  for (int c = 0; c < classes; ++c) codes.push_back("c" + std::to_string(c));
  return LabelSet(codes);
}

namespace {

Rgb hsv_to_rgb(double h_deg, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h_deg, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {to_u8((r + m) * 255.0), to_u8((g + m) * 255.0), to_u8((b + m) * 255.0)};
}

struct EllipseParams {
  double cx, cy, ra, rb, angle, value;
};

ImageU8 render_lesion(int size, Rgb color, const EllipseParams& e, Rng& speckle) {
  ImageU8 img(size, size);
  const double ca = std::cos(e.angle);
  const double sa = std::sin(e.angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - e.cx;
      const double dy = y - e.cy;
      const double u = (ca * dx + sa * dy) / e.ra;
      const double v = (-sa * dx + ca * dy) / e.rb;
      Rgb base = (u * u + v * v <= 1.0) ? color : Rgb{196, 160, 140};
      const double n = speckle.uniform(-24.0, 24.0);
      img.set(x, y, {to_u8(base.r + n), to_u8(base.g + n), to_u8(base.b + n)});
    }
  }
  return img;
}

}  // namespace

DatasetManifest synth_dataset(const SynthSpec& spec, const fs::path& out_dir) {
  if (spec.classes < 2 || spec.classes > 16) throw ValidationError("synthetic corpus needs 2..16 classes");
  if (static_cast<int>(spec.per_class.size()) != spec.classes) {
    throw ValidationError("per-class counts must list one count per class");
  }
  for (int n : spec.per_class) {
    if (n < 1) throw ValidationError("per-class counts must be positive");
  }
  if (spec.image_size < 8) throw ValidationError("synthetic image size must be at least 8");
  if (spec.images_per_lesion < 1) throw ValidationError("images_per_lesion must be positive");

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  DatasetManifest m;
  m.labels = synth_labels(spec.classes);
  const double size = spec.image_size;
  int serial = 0;
  int lesion_serial = 0;
  for (int c = 0; c < spec.classes; ++c) {
    const double hue = 360.0 * c / spec.classes;
    EllipseParams params{};
    std::string lesion_id;
    for (int i = 0; i < spec.per_class[static_cast<std::size_t>(c)]; ++i) {
      if (i % spec.images_per_lesion == 0) {
        Rng shape(derive_seed(spec.seed, "synth-lesion", {static_cast<std::uint64_t>(c),
                                                          static_cast<std::uint64_t>(i)}));
        params.cx = size * shape.uniform(0.42, 0.58);
        params.cy = size * shape.uniform(0.42, 0.58);
        params.ra = size * shape.uniform(0.22, 0.34);
        params.rb = size * shape.uniform(0.22, 0.34);
        params.angle = shape.uniform(0.0, std::numbers::pi);
        params.value = shape.uniform(0.65, 0.9);
        char buf[32];
        std::snprintf(buf, sizeof buf, "SYNL_%07d", lesion_serial++);
        lesion_id = buf;
      }
      char id[32];
      std::snprintf(id, sizeof id, "SYN_%07d", serial++);
      Rng speckle(derive_seed(spec.seed, "synth-image", {static_cast<std::uint64_t>(c),
                                                         static_cast<std::uint64_t>(i)}));
      const ImageU8 img = render_lesion(spec.image_size, hsv_to_rgb(hue, 0.8, params.value), params, speckle);
      const fs::path rel = fs::path("images") / (std::string(id) + ".ppm");
      write_image_file((out_dir / rel).string(), img);
      m.samples.push_back({id, lesion_id, c, (out_dir / rel).string()});
    }
  }
  m.recount();
  {
    std::ofstream out(out_dir / "manifest.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / "manifest.csv").string());
    write_manifest(out, m, out_dir);
  }
  {
    std::ofstream out(out_dir / "labels.txt", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / "labels.txt").string());
    for (const auto& code : m.labels.codes()) out << code << '\n';
  }
  return m;
}

std::shared_ptr<const ImageU8> ImageStore::get(const SampleMeta& sample) const {
  {
    std::lock_guard lock(mu_);
    auto it = images_.find(sample.image_id);
    if (it != images_.end()) return it->second;
  }
  auto img = std::make_shared<const ImageU8>(read_image_file(sample.path));
  if (cache_) {
    std::lock_guard lock(mu_);
    images_.emplace(sample.image_id, img);
  }
  return img;
}

void ImageStore::put(const std::string& image_id, ImageU8 image) {
  std::lock_guard lock(mu_);
  images_[image_id] = std::make_shared<const ImageU8>(std::move(image));
}

}  // namespace lca
