#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lca/classifier.hpp"
#include "lca/error.hpp"
#include "lca/multicrop.hpp"
#include "test_util.hpp"

using namespace lca;
using lca::testing::random_image;

namespace {

// Area average by supersampling: replicate each pixel `side` times per axis, then box-average
// blocks of W x H, which weighs every source pixel by its exact overlap.
std::vector<double> featurize_oracle(const ImageU8& img, int side) {
  const int w = img.width();
  const int h = img.height();
  std::vector<double> out(static_cast<std::size_t>(3 * side * side), 0.0);
  for (int oy = 0; oy < side; ++oy) {
    for (int ox = 0; ox < side; ++ox) {
      double acc[3] = {0, 0, 0};
      for (int sy = oy * h; sy < (oy + 1) * h; ++sy) {
        for (int sx = ox * w; sx < (ox + 1) * w; ++sx) {
          const Rgb p = img.at(sx / side, sy / side);
          acc[0] += p.r;
          acc[1] += p.g;
          acc[2] += p.b;
        }
      }
      for (int c = 0; c < 3; ++c) {
        out[static_cast<std::size_t>((oy * side + ox) * 3 + c)] = acc[c] / (static_cast<double>(w) * h * 255.0);
      }
    }
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); }

TrainerConfig small_config() {
  TrainerConfig c;
  c.crop_size = 12;
  c.feature_side = 4;
  c.batch_size = 8;
  c.max_epochs = 20;
  c.eval_start = 10;
  c.eval_step = 5;
  c.lr0 = 0.05;
  c.seed = 3;
  return c;
}

// Two classes of 16x16 images: dark vs bright with noise.
DatasetManifest two_class_corpus(ImageStore& store, int per_class) {
  DatasetManifest m;
  m.labels = LabelSet({"dark", "bright"});
  Rng rng(77);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      ImageU8 img(16, 16);
      for (auto& v : img.bytes()) v = static_cast<std::uint8_t>((c ? 150 : 40) + rng.index(60));
      const std::string id = "s" + std::to_string(c) + "_" + std::to_string(i);
      store.put(id, img);
      m.samples.push_back({id, id, c, id + ".ppm"});
    }
  }
  m.recount();
  return m;
}

}  // namespace

TEST_CASE("featurize") {
  const ImageU8 gray(10, 10, Rgb{51, 102, 204});
  const auto flat = featurize(gray, 4);
  for (std::size_t i = 0; i < flat.size(); i += 3) {
    CHECK(flat[i] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(flat[i + 1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(flat[i + 2] == doctest::Approx(0.8).epsilon(1e-12));
  }
  Rng rng(2);
  const ImageU8 img = random_image(7, 5, rng);
  const auto one = featurize(img, 1);
  REQUIRE(one.size() == 3);
  double sum[3] = {0, 0, 0};
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      sum[0] += img.at(x, y).r;
      sum[1] += img.at(x, y).g;
      sum[2] += img.at(x, y).b;
    }
  }
  for (int c = 0; c < 3; ++c) CHECK(one[static_cast<std::size_t>(c)] == doctest::Approx(sum[c] / 35.0 / 255.0));

  for (int trial = 0; trial < 20; ++trial) {
    const int w = 5 + static_cast<int>(rng.index(20));
    const int h = 5 + static_cast<int>(rng.index(20));
    const int side = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(std::min(w, h))));
    const ImageU8 im = random_image(w, h, rng);
    const auto got = featurize(im, side);
    const auto want = featurize_oracle(im, side);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }

  // pixel replication leaves features unchanged
  const ImageU8 small = random_image(9, 6, rng);
  ImageU8 big(18, 12);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 18; ++x) big.set(x, y, small.at(x / 2, y / 2));
  }
  const auto a = featurize(small, 3);
  const auto b = featurize(big, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(featurize(big, 3).size() == 27);
  CHECK_THROWS_AS(featurize(small, 7), ValidationError);
}

TEST_CASE("weighted cross-entropy") {
  const std::vector<double> ones{1.0, 1.0};
  CHECK(weighted_ce_loss(std::vector<double>{0.5, 0.5}, 0, ones) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(weighted_ce_loss(std::vector<double>{1.0, 0.0}, 0, ones) == 0.0);
  CHECK(weighted_ce_loss(std::vector<double>{0.75, 0.25}, 1, std::vector<double>{1.0, 2.0}) ==
        doctest::Approx(2.772589).epsilon(1e-6));
  CHECK(weighted_ce_loss(std::vector<double>{1.0, 0.0}, 1, ones) == doctest::Approx(-std::log(kLogFloor)));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> z(5);
    for (auto& v : z) v = rng.uniform(-4, 4);
    const auto p = softmax(z);
    const int t = static_cast<int>(rng.index(5));
    // unit weights reduce to the plain cross-entropy
    CHECK(weighted_ce_loss(p, t, std::vector<double>(5, 1.0)) == -std::log(p[static_cast<std::size_t>(t)]));
  }
}

TEST_CASE("softmax and predict") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-50, 50);
    const auto p = softmax(z);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : p) CHECK(v >= 0.0);
    std::vector<double> shifted = z;
    for (auto& v : shifted) v += 1000.0;
    const auto q = softmax(shifted);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-9));
  }
  const LinearSoftmaxModel zero(3, 2);
  const ImageU8 img = random_image(5, 5, rng);
  for (double v : predict(zero, img)) CHECK(v == doctest::Approx(1.0 / 3.0));
  LinearSoftmaxModel m(3, 2);
  for (auto& w : m.weights) w = rng.uniform(-1, 1);
  const auto base = predict(m, img);
  for (auto& b : m.bias) b += 7.5;
  const auto moved = predict(m, img);
  for (std::size_t k = 0; k < 3; ++k) CHECK(moved[k] == doctest::Approx(base[k]).epsilon(1e-12));
  CHECK_THROWS_AS(LinearSoftmaxModel(1, 4), ValidationError);
  CHECK(model_from_json(to_json(m)) == m);
}

TEST_CASE("gradients match finite differences") {
  Rng rng(13);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + static_cast<int>(rng.index(6));
    std::vector<double> z(static_cast<std::size_t>(c));
    std::vector<double> w(static_cast<std::size_t>(c));
    for (auto& v : z) v = rng.uniform(-3, 3);
    for (auto& v : w) v = rng.uniform(0.5, 5);
    const int t = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
    const auto g = loss_grad_logits(z, t, w);
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    for (std::size_t k = 0; k < z.size(); ++k) {
      auto zp = z;
      auto zm = z;
      zp[k] += h;
      zm[k] -= h;
      const double fd = (weighted_ce_loss(softmax(zp), t, w) - weighted_ce_loss(softmax(zm), t, w)) / (2 * h);
      CHECK(rel_err(fd, g[k]) < 1e-4);
    }
  }
  // at the optimum the gradient vanishes
  const auto g0 = loss_grad_logits(std::vector<double>{800.0, 0.0, 0.0}, 0, std::vector<double>{1, 1, 1});
  for (double v : g0) CHECK(std::abs(v) < 1e-300);

  // weights and bias through batch_gradient
  LinearSoftmaxModel m(3, 2);
  for (auto& v : m.weights) v = rng.uniform(-1, 1);
  for (auto& v : m.bias) v = rng.uniform(-1, 1);
  std::vector<std::vector<double>> feats(5, std::vector<double>(m.dim()));
  for (auto& f : feats) {
    for (auto& v : f) v = rng.uniform();
  }
  const std::vector<int> targets{0, 2, 1, 1, 0};
  const std::vector<double> cw{1.0, 3.0, 0.5};
  const BatchGradient g = batch_gradient(m, feats, targets, cw);
  const auto loss_at = [&](const LinearSoftmaxModel& mm) { return batch_gradient(mm, feats, targets, cw).loss; };
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    LinearSoftmaxModel p = m;
    LinearSoftmaxModel q = m;
    p.weights[k] += h;
    q.weights[k] -= h;
    CHECK(rel_err((loss_at(p) - loss_at(q)) / (2 * h), g.grad_weights[k]) < 1e-4);
  }
  for (std::size_t k = 0; k < m.bias.size(); ++k) {
    LinearSoftmaxModel p = m;
    LinearSoftmaxModel q = m;
    p.bias[k] += h;
    q.bias[k] -= h;
    CHECK(rel_err((loss_at(p) - loss_at(q)) / (2 * h), g.grad_bias[k]) < 1e-4);
  }
}

TEST_CASE("learning-rate schedule") {
  const TrainerConfig c;
  CHECK(lr_schedule(0, c) == 0.001);
  CHECK(lr_schedule(19, c) == 0.001);
  CHECK(lr_schedule(20, c) == 1e-4);
  CHECK(lr_schedule(29, c) == 1e-4);
  CHECK(lr_schedule(30, c) == 1e-5);
  CHECK(lr_schedule(65, c) == 1e-8);
  CHECK(lr_schedule(69, c) == 1e-8);
  CHECK_THROWS_AS(lr_schedule(70, c), ValidationError);
  CHECK_THROWS_AS(lr_schedule(-1, c), ValidationError);
  std::vector<int> breaks;
  for (int e = 1; e < 70; ++e) {
    CHECK(lr_schedule(e, c) <= lr_schedule(e - 1, c));
    if (lr_schedule(e, c) != lr_schedule(e - 1, c)) breaks.push_back(e);
  }
  CHECK(breaks == std::vector<int>{20, 30, 40, 50, 60});
}

TEST_CASE("adam") {
  const TrainerConfig c;
  std::vector<double> p{1.0, -2.0, 3.0};
  AdamState s(3);
  adam_step(p, std::vector<double>{0, 0, 0}, s, 0.1, c);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  AdamState s2(3);
  const std::vector<double> g{0.5, -4.0, 1e-3};
  std::vector<double> q{0.0, 0.0, 0.0};
  adam_step(q, g, s2, 0.01, c);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(q[i] == doctest::Approx(-0.01 * g[i] / (std::abs(g[i]) + c.adam_eps)).epsilon(1e-9));
  }
  CHECK(s2.step == 1);
  std::vector<double> bad{1.0};
  CHECK_THROWS_AS(adam_step(bad, g, s2, 0.1, c), ValidationError);
}

TEST_CASE("trainer config") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.checkpoint_epochs() == std::vector<int>{30, 35, 40, 45, 50, 55, 60, 65, 70});
  c.batch_size = 48;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.batch_size = 32;
  c.max_epochs = 40;
  CHECK(c.checkpoint_epochs() == std::vector<int>{30, 35, 40});
  const TrainerConfig back = trainer_config_from_json(to_json(c));
  CHECK(back.batch_size == 32);
  CHECK(back.max_epochs == 40);
  CHECK(back.lr0 == c.lr0);
  CHECK(trainer_config_from_json({{"max_epochs", 7}}).max_epochs == 7);
}

TEST_CASE("training on separable features") {
  Rng rng(21);
  std::vector<std::vector<double>> feats;
  std::vector<int> targets;
  for (int i = 0; i < 64; ++i) {
    const int t = i % 2;
    std::vector<double> f(12);
    for (auto& v : f) v = rng.uniform(0.0, 0.4);
    f[0] = t ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.3);
    feats.push_back(f);
    targets.push_back(t);
  }
  TrainerConfig c;
  c.feature_side = 2;
  c.crop_size = 2;
  c.batch_size = 16;
  c.max_epochs = 60;
  c.lr0 = 0.05;
  c.eval_start = 10;
  c.eval_step = 10;
  const ClassWeights w{{1.0, 1.0}};
  const TrainResult r = train_on_features(feats, targets, 2, c, w);
  REQUIRE(r.epoch_loss.size() == 60);
  CHECK(r.epoch_loss.back() < 0.5 * r.epoch_loss.front());
  int rises = 0;
  for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) rises += r.epoch_loss[e] > r.epoch_loss[e - 1] + 1e-3 ? 1 : 0;
  CHECK(rises <= 3);
  int correct = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto p = predict_features(r.model, feats[i]);
    correct += (p[1] > p[0]) == (targets[i] == 1) ? 1 : 0;
  }
  CHECK(correct == 64);
  CHECK(r.checkpoints.size() == 6);
  CHECK(r.checkpoints.at(60) == r.model);
  const TrainResult again = train_on_features(feats, targets, 2, c, w);
  CHECK(again.model == r.model);
}

TEST_CASE("reference training") {
  ImageStore store;
  const DatasetManifest m = two_class_corpus(store, 12);
  const ClassWeights w = class_weights(m);
  TrainerConfig c = small_config();
  const LcaPolicy off{lca_default(), 0.0, 1};

  TrainerConfig frozen = c;
  frozen.lr0 = 0.0;
  frozen.max_epochs = 1;
  frozen.eval_start = 1;
  const TrainResult still = train_reference(m, store, off, frozen, w);
  CHECK(still.model == LinearSoftmaxModel(2, c.feature_side));

  const LcaPolicy on{lca_default(), 0.5, 1};
  const TrainResult a = train_reference(m, store, on, c, w);
  const TrainResult b = train_reference(m, store, on, c, w);
  CHECK(a.model == b.model);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.checkpoints.size() == 3);
  TrainerConfig other = c;
  other.seed = 4;
  CHECK_FALSE(train_reference(m, store, on, other, w).model == a.model);

  ReferenceClassifier clf(store);
  FitRequest req{"run", &m, on, c, w};
  clf.fit(req);
  CHECK(clf.checkpoint_epochs() == std::vector<int>{10, 15, 20});
  int correct = 0;
  for (const auto& s : m.samples) {
    const auto p = clf.predict(s, 20);
    const auto q = multi_crop_predict(clf.result().checkpoints.at(20), *store.get(s), c.crop_size);
    for (std::size_t k = 0; k < 2; ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-12));
    correct += (p[1] > p[0]) == (s.label == 1) ? 1 : 0;
  }
  CHECK(correct == static_cast<int>(m.total()));
  CHECK_THROWS_AS(clf.predict(m.samples[0], 12), ValidationError);

  DatasetManifest one_class = m.subset({"s0_0", "s0_1"});
  CHECK_THROWS_AS(train_reference(one_class, store, off, c, ClassWeights{{1.0, 1.0}}), DataError);
}
