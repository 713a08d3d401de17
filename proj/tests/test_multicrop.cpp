#include <doctest.h>

#include <cmath>
#include <set>

#include "lca/error.hpp"
#include "lca/multicrop.hpp"
#include "test_util.hpp"

using namespace lca;
using lca::testing::random_image;

TEST_CASE("crop grid offsets") {
  const CropSet set = multi_crop_offsets(600, 450, 224);
  const int xs[4] = {0, 125, 251, 376};
  const int ys[4] = {0, 75, 151, 226};
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) CHECK(set.offsets[static_cast<std::size_t>(j * 4 + i)] == CropOffset{xs[i], ys[j]});
  }
  const CropSet square = multi_crop_offsets(224, 224, 224);
  for (const auto& o : square.offsets) CHECK(o == CropOffset{0, 0});
  CHECK_THROWS_AS(multi_crop_offsets(200, 300, 224), ValidationError);

  // oracle: real-valued formula, round half up
  for (int w = 30; w < 90; w += 7) {
    for (int side = 5; side <= 30; side += 5) {
      const CropSet s = multi_crop_offsets(w, w + 3, side);
      for (int i = 0; i < 4; ++i) {
        const int want = static_cast<int>(std::floor(i * (w - side) / 3.0 + 0.5));
        CHECK(s.offsets[static_cast<std::size_t>(i)].x == want);
      }
      CHECK(s.offsets[15] == CropOffset{w - side, w + 3 - side});
    }
  }
}

TEST_CASE("multi-crop prediction is the mean of the crop predictions") {
  Rng rng(4);
  const ImageU8 img = random_image(40, 30, rng);
  LinearSoftmaxModel m(3, 4);
  for (auto& w : m.weights) w = rng.uniform(-2, 2);
  for (auto& b : m.bias) b = rng.uniform(-1, 1);
  const auto got = multi_crop_predict(m, img, 20);
  std::vector<double> want(3, 0.0);
  for (const auto& o : multi_crop_offsets(40, 30, 20).offsets) {
    const auto p = predict(m, crop(img, o, 20, 20));
    for (std::size_t k = 0; k < 3; ++k) want[k] += p[k] / 16.0;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
    sum += got[k];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const auto feats = multi_crop_features(img, 20, 4);
  REQUIRE(feats.size() == 16);
  CHECK(feats[5] == featurize(crop(img, multi_crop_offsets(40, 30, 20).offsets[5], 20, 20), 4));
  CHECK(multi_crop_predict_features(m, feats) == got);

  // a crop-sized image gives 16 identical views, so the mean equals the single prediction
  const ImageU8 exact = random_image(20, 20, rng);
  CHECK(multi_crop_predict(m, exact, 20) == predict(m, exact));
}
