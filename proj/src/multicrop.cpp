#include "lca/multicrop.hpp"

#include "lca/error.hpp"

namespace lca {

CropSet multi_crop_offsets(int width, int height, int side) {
  if (side < 1) throw ValidationError("crop side must be positive");
  if (width < side || height < side) {
    throw ValidationError("image " + std::to_string(width) + "x" + std::to_string(height) +
                          " is smaller than the multi-crop side " + std::to_string(side));
  }
  CropSet set;
  set.side = side;
  const auto grid = [](int span, int i) {
    // round-half-up of i * span / 3 in integers
    return (2 * i * span + 3) / 6;
  };
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) {
      set.offsets[static_cast<std::size_t>(j * 4 + i)] = {grid(width - side, i), grid(height - side, j)};
    }
  }
  return set;
}

namespace {

ProbVector mean_of_16(std::vector<ProbVector> preds) {
  if (preds.size() != 16) throw ValidationError("multi-crop prediction needs 16 crops");
  // Balanced pairwise reduction over 16 terms: identical crops average back to the exact value.
  for (std::size_t width = preds.size(); width > 1; width /= 2) {
    for (std::size_t i = 0; i < width / 2; ++i) {
      for (std::size_t c = 0; c < preds[i].size(); ++c) preds[i][c] += preds[i + width / 2][c];
    }
  }
  ProbVector mean = std::move(preds.front());
  for (auto& v : mean) v /= 16.0;
  return mean;
}

}  // namespace

ProbVector multi_crop_predict(const LinearSoftmaxModel& model, const ImageU8& image, int side) {
  const CropSet set = multi_crop_offsets(image.width(), image.height(), side);
  std::vector<ProbVector> preds;
  preds.reserve(set.offsets.size());
  for (const CropOffset& o : set.offsets) preds.push_back(predict(model, crop(image, o, side, side)));
  return mean_of_16(std::move(preds));
}

std::vector<std::vector<double>> multi_crop_features(const ImageU8& image, int side, int feature_side) {
  const CropSet set = multi_crop_offsets(image.width(), image.height(), side);
  std::vector<std::vector<double>> out;
  out.reserve(set.offsets.size());
  for (const CropOffset& o : set.offsets) out.push_back(featurize(crop(image, o, side, side), feature_side));
  return out;
}

ProbVector multi_crop_predict_features(const LinearSoftmaxModel& model,
                                       const std::vector<std::vector<double>>& crop_features) {
  std::vector<ProbVector> preds;
  preds.reserve(crop_features.size());
  for (const auto& f : crop_features) preds.push_back(predict_features(model, f));
  return mean_of_16(std::move(preds));
}

}  // namespace lca
