#include "lca/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lca/error.hpp"
#include "lca/multicrop.hpp"

namespace lca {

using nlohmann::json;

void TrainerConfig::validate() const {
  const auto positive = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("trainer config: ") + what);
  };
  positive(lr0 >= 0.0, "lr0 must be non-negative");
  positive(decay_factor > 0.0, "decay_factor must be positive");
  positive(first_decay_epoch >= 0 && decay_period > 0, "decay epochs must be positive");
  positive(max_epochs > 0, "max_epochs must be positive");
  positive(batch_size > 0 && (batch_size & (batch_size - 1)) == 0, "batch_size must be a power of two");
  positive(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
           "adam betas must lie in [0, 1)");
  positive(adam_eps > 0.0, "adam_eps must be positive");
  positive(crop_size > 0 && feature_side > 0, "crop_size and feature_side must be positive");
  positive(feature_side <= crop_size, "feature_side cannot exceed crop_size");
  positive(eval_start > 0 && eval_step > 0 && eval_end >= eval_start, "bad checkpoint schedule");
}

std::vector<int> TrainerConfig::checkpoint_epochs() const {
  std::vector<int> out;
  const int last = std::min(eval_end, max_epochs);
  for (int e = eval_start; e <= last; e += eval_step) out.push_back(e);
  if (out.empty()) out.push_back(max_epochs);
  return out;
}

json to_json(const TrainerConfig& c) {
  return {{"lr0", c.lr0},
          {"decay_factor", c.decay_factor},
          {"first_decay_epoch", c.first_decay_epoch},
          {"decay_period", c.decay_period},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"crop_size", c.crop_size},
          {"feature_side", c.feature_side},
          {"eval_start", c.eval_start},
          {"eval_step", c.eval_step},
          {"eval_end", c.eval_end},
          {"seed", c.seed}};
}

TrainerConfig trainer_config_from_json(const json& j, TrainerConfig c) {
  c.lr0 = j.value("lr0", c.lr0);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.first_decay_epoch = j.value("first_decay_epoch", c.first_decay_epoch);
  c.decay_period = j.value("decay_period", c.decay_period);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.crop_size = j.value("crop_size", c.crop_size);
  c.feature_side = j.value("feature_side", c.feature_side);
  c.eval_start = j.value("eval_start", c.eval_start);
  c.eval_step = j.value("eval_step", c.eval_step);
  c.eval_end = j.value("eval_end", c.eval_end);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

// Source spans of each output cell along one axis for exact area averaging.
struct AxisTap {
  int src;
  double weight;
};

std::vector<std::vector<AxisTap>> area_taps(int src_len, int out_len) {
  std::vector<std::vector<AxisTap>> taps(static_cast<std::size_t>(out_len));
  const double step = static_cast<double>(src_len) / out_len;
  for (int o = 0; o < out_len; ++o) {
    const double lo = o * step;
    const double hi = (o + 1) * step;
    for (int s = static_cast<int>(std::floor(lo)); s < src_len && s < hi; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) taps[static_cast<std::size_t>(o)].push_back({s, overlap / step});
    }
  }
  return taps;
}

}  // namespace

std::vector<double> featurize(const ImageU8& image, int side) {
  if (side < 1) throw ValidationError("feature side must be positive");
  if (image.width() < side || image.height() < side) {
    throw ValidationError("image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                          " is smaller than feature side " + std::to_string(side));
  }
  const auto tx = area_taps(image.width(), side);
  const auto ty = area_taps(image.height(), side);
  const auto s = static_cast<std::size_t>(side);
  const auto bytes = image.bytes();
  const auto w = static_cast<std::size_t>(image.width());
  // Collapse columns first: rows x side x 3.
  std::vector<double> rows(static_cast<std::size_t>(image.height()) * s * 3, 0.0);
  for (std::size_t y = 0; y < static_cast<std::size_t>(image.height()); ++y) {
    const std::uint8_t* row = bytes.data() + y * w * 3;
    double* dst = rows.data() + y * s * 3;
    for (std::size_t ox = 0; ox < s; ++ox) {
      double r = 0, g = 0, b = 0;
      for (const auto& t : tx[ox]) {
        const std::uint8_t* p = row + static_cast<std::size_t>(t.src) * 3;
        r += t.weight * p[0];
        g += t.weight * p[1];
        b += t.weight * p[2];
      }
      dst[ox * 3] = r;
      dst[ox * 3 + 1] = g;
      dst[ox * 3 + 2] = b;
    }
  }
  std::vector<double> out(s * s * 3, 0.0);
  for (std::size_t oy = 0; oy < s; ++oy) {
    for (const auto& t : ty[oy]) {
      const double* src = rows.data() + static_cast<std::size_t>(t.src) * s * 3;
      double* dst = out.data() + oy * s * 3;
      for (std::size_t i = 0; i < s * 3; ++i) dst[i] += t.weight * src[i];
    }
  }
  for (auto& v : out) v /= 255.0;
  return out;
}

ProbVector softmax(std::span<const double> logits) {
  ProbVector p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

double weighted_ce_loss(std::span<const double> probs, int target, std::span<const double> weights) {
  const auto t = static_cast<std::size_t>(target);
  if (target < 0 || t >= probs.size() || t >= weights.size()) {
    throw ValidationError("target class " + std::to_string(target) + " out of range");
  }
  return -weights[t] * std::log(std::max(probs[t], kLogFloor));
}

std::vector<double> loss_grad_logits(std::span<const double> logits, int target,
                                     std::span<const double> weights) {
  const auto t = static_cast<std::size_t>(target);
  if (target < 0 || t >= logits.size() || t >= weights.size()) {
    throw ValidationError("target class " + std::to_string(target) + " out of range");
  }
  std::vector<double> g = softmax(logits);
  g[t] -= 1.0;
  for (auto& v : g) v *= weights[t];
  return g;
}

double lr_schedule(int epoch, const TrainerConfig& c) {
  if (epoch < 0) throw ValidationError("epoch must be non-negative");
  if (epoch >= c.max_epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) + " is past the last training epoch (" +
                          std::to_string(c.max_epochs - 1) + ")");
  }
  if (epoch < c.first_decay_epoch) return c.lr0;
  const int decays = 1 + (epoch - c.first_decay_epoch) / c.decay_period;
  // Dividing by an exact integer power keeps 1e-3 -> 1e-4 -> ... bit-exact.
  const double inverse = 1.0 / c.decay_factor;
  if (std::abs(inverse - std::round(inverse)) < 1e-12) {
    return c.lr0 / std::pow(std::round(inverse), decays);
  }
  return c.lr0 * std::pow(c.decay_factor, decays);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const TrainerConfig& c) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.adam_beta1 * state.m[i] + (1.0 - c.adam_beta1) * grads[i];
    state.v[i] = c.adam_beta2 * state.v[i] + (1.0 - c.adam_beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + c.adam_eps);
  }
}

LinearSoftmaxModel::LinearSoftmaxModel(int classes_, int feature_side_)
    : classes(classes_), feature_side(feature_side_) {
  if (classes < 2) throw ValidationError("a classifier needs at least two classes");
  weights.assign(static_cast<std::size_t>(classes) * dim(), 0.0);
  bias.assign(static_cast<std::size_t>(classes), 0.0);
}

std::vector<double> LinearSoftmaxModel::logits(std::span<const double> x) const {
  const std::size_t d = dim();
  if (x.size() != d) {
    throw ValidationError("feature length " + std::to_string(x.size()) + " != model dimension " +
                          std::to_string(d));
  }
  std::vector<double> z(bias);
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double* w = weights.data() + c * d;
    z[c] += std::inner_product(x.begin(), x.end(), w, 0.0);
  }
  return z;
}

ProbVector predict_features(const LinearSoftmaxModel& model, std::span<const double> features) {
  return softmax(model.logits(features));
}

ProbVector predict(const LinearSoftmaxModel& model, const ImageU8& image) {
  return predict_features(model, featurize(image, model.feature_side));
}

BatchGradient batch_gradient(const LinearSoftmaxModel& model, std::span<const std::vector<double>> features,
                             std::span<const int> targets, std::span<const double> class_weights) {
  const std::size_t d = model.dim();
  BatchGradient g;
  g.grad_weights.assign(model.weights.size(), 0.0);
  g.grad_bias.assign(model.bias.size(), 0.0);
  if (features.empty()) return g;
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto z = model.logits(features[i]);
    g.loss += weighted_ce_loss(softmax(z), targets[i], class_weights) * inv_n;
    const auto gz = loss_grad_logits(z, targets[i], class_weights);
    for (std::size_t c = 0; c < gz.size(); ++c) {
      const double s = gz[c] * inv_n;
      g.grad_bias[c] += s;
      double* gw = g.grad_weights.data() + c * d;
      const auto& x = features[i];
      for (std::size_t k = 0; k < d; ++k) gw[k] += s * x[k];
    }
  }
  return g;
}

namespace {

// Shared minibatch Adam loop; `sample_features(index, epoch)` yields one feature vector.
template <typename FeatureFn>
TrainResult run_training(std::size_t n, std::span<const int> targets, int classes, const TrainerConfig& config,
                         const ClassWeights& weights, FeatureFn&& sample_features) {
  config.validate();
  if (n == 0) throw DataError("training set is empty");
  if (weights.w.size() != static_cast<std::size_t>(classes)) {
    throw ValidationError("class weight vector length differs from class count");
  }
  TrainResult result;
  result.model = LinearSoftmaxModel(classes, config.feature_side);
  LinearSoftmaxModel& model = result.model;
  AdamState wstate(model.weights.size());
  AdamState bstate(model.bias.size());
  // Weight and bias moments share one step counter.
  const auto checkpoints = config.checkpoint_epochs();
  std::vector<std::size_t> order(n);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::vector<double>> feats;
  std::vector<int> batch_targets;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, "shuffle", {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    const double lr = lr_schedule(epoch, config);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      feats = sample_features(batch, epoch);
      batch_targets.clear();
      for (std::size_t idx : batch) batch_targets.push_back(targets[idx]);
      const BatchGradient g = batch_gradient(model, feats, batch_targets, weights.w);
      loss_sum += g.loss * static_cast<double>(batch.size());
      adam_step(model.weights, g.grad_weights, wstate, lr, config);
      adam_step(model.bias, g.grad_bias, bstate, lr, config);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    if (std::find(checkpoints.begin(), checkpoints.end(), epoch + 1) != checkpoints.end()) {
      result.checkpoints.emplace(epoch + 1, model);
    }
  }
  return result;
}

}  // namespace

TrainResult train_on_features(std::span<const std::vector<double>> features, std::span<const int> targets,
                              int classes, const TrainerConfig& config, const ClassWeights& weights) {
  if (features.size() != targets.size()) throw ValidationError("features and targets differ in length");
  return run_training(features.size(), targets, classes, config, weights,
                      [&](std::span<const std::size_t> batch, int) {
                        std::vector<std::vector<double>> out;
                        out.reserve(batch.size());
                        for (std::size_t idx : batch) out.push_back(features[idx]);
                        return out;
                      });
}

TrainResult train_reference(const DatasetManifest& train, const ImageStore& store, const LcaPolicy& policy,
                            const TrainerConfig& config, const ClassWeights& weights) {
  policy.validate();
  for (std::size_t c = 0; c < train.class_counts.size(); ++c) {
    if (train.class_counts[c] == 0) {
      throw DataError("class " + train.labels.display_name(c) + " is absent from the training set");
    }
  }
  std::vector<int> targets;
  std::vector<std::shared_ptr<const ImageU8>> images;
  for (const auto& s : train.samples) {
    targets.push_back(s.label);
    images.push_back(store.get(s));
  }
  const std::uint64_t stream_root = derive_seed(config.seed, "policy", {policy.seed});
  return run_training(
      train.samples.size(), targets, static_cast<int>(train.labels.size()), config, weights,
      [&](std::span<const std::size_t> batch, int epoch) {
        std::vector<std::vector<double>> out;
        out.reserve(batch.size());
        for (std::size_t idx : batch) {
          const ImageU8& img = *images[idx];
          BatchContext ctx;
          for (std::size_t other : batch) {
            const ImageU8& p = *images[other];
            if (other != idx && p.width() == img.width() && p.height() == img.height()) {
              ctx.partners.push_back(&p);
            }
          }
          Rng rng(augmentation_seed(stream_root, idx, static_cast<std::uint64_t>(epoch)));
          Augmented aug = apply_policy(img, ctx, policy, rng);
          out.push_back(featurize(random_crop(aug.image, config.crop_size, rng), config.feature_side));
        }
        return out;
      });
}

json to_json(const LinearSoftmaxModel& m) {
  return {{"classes", m.classes}, {"feature_side", m.feature_side}, {"weights", m.weights}, {"bias", m.bias}};
}

LinearSoftmaxModel model_from_json(const json& j) {
  try {
    LinearSoftmaxModel m(j.at("classes").get<int>(), j.at("feature_side").get<int>());
    auto w = j.at("weights").get<std::vector<double>>();
    auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != m.weights.size() || b.size() != m.bias.size()) {
      throw ValidationError("model parameter arrays have the wrong length");
    }
    m.weights = std::move(w);
    m.bias = std::move(b);
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
}

void ReferenceClassifier::fit(const FitRequest& request) {
  if (request.train == nullptr) throw ValidationError("fit request has no training manifest");
  config_ = request.config;
  crop_features_.clear();
  result_ = train_reference(*request.train, store_, request.policy, request.config, request.weights);
}

std::vector<int> ReferenceClassifier::checkpoint_epochs() const {
  std::vector<int> out;
  for (const auto& [epoch, model] : result_.checkpoints) out.push_back(epoch);
  return out;
}

ProbVector ReferenceClassifier::predict(const SampleMeta& sample, int epoch) {
  auto it = result_.checkpoints.find(epoch);
  if (it == result_.checkpoints.end()) {
    throw ValidationError("no checkpoint at epoch " + std::to_string(epoch));
  }
  auto feats = crop_features_.find(sample.image_id);
  if (feats == crop_features_.end()) {
    feats = crop_features_
                .emplace(sample.image_id,
                         multi_crop_features(*store_.get(sample), config_.crop_size, config_.feature_side))
                .first;
  }
  return multi_crop_predict_features(it->second, feats->second);
}

}  // namespace lca
