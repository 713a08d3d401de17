#pragma once

#include <array>

#include "lca/classifier.hpp"
#include "lca/dataset.hpp"

namespace lca {

// 4 x 4 grid of equidistant square crops from the top-left to the bottom-right corner.
struct CropSet {
  int side = 224;
  std::array<CropOffset, 16> offsets{};
};

// x_i = round(i (W - side) / 3), y_j = round(j (H - side) / 3); offsets are ordered row by row.
CropSet multi_crop_offsets(int width, int height, int side = 224);

// Mean of the 16 per-crop predictions.
ProbVector multi_crop_predict(const LinearSoftmaxModel& model, const ImageU8& image, int side = 224);

// Feature vectors of the 16 crops, so several checkpoints can share one featurization.
std::vector<std::vector<double>> multi_crop_features(const ImageU8& image, int side, int feature_side);
ProbVector multi_crop_predict_features(const LinearSoftmaxModel& model,
                                       const std::vector<std::vector<double>>& crop_features);

}  // namespace lca
