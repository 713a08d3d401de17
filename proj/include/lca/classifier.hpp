#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lca/dataset.hpp"
#include "lca/image.hpp"
#include "lca/policy.hpp"

namespace lca {

// Length-C point on the probability simplex.
using ProbVector = std::vector<double>;

struct TrainerConfig {
  double lr0 = 0.001;
  double decay_factor = 0.1;
  int first_decay_epoch = 20;
  int decay_period = 10;
  int max_epochs = 70;
  int batch_size = 64;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop_size = 224;
  int feature_side = 16;
  int eval_start = 30;
  int eval_step = 5;
  int eval_end = 90;
  std::uint64_t seed = 0;

  void validate() const;
  // eval_start..min(eval_end, max_epochs) step eval_step; epoch e means "after e epochs".
  std::vector<int> checkpoint_epochs() const;
};

nlohmann::json to_json(const TrainerConfig& config);
TrainerConfig trainer_config_from_json(const nlohmann::json& j, TrainerConfig base = {});

// Area-average downsample to side x side, scaled to [0, 1], flattened row-major as (y, x, channel).
std::vector<double> featurize(const ImageU8& image, int side);

ProbVector softmax(std::span<const double> logits);

inline constexpr double kLogFloor = 1e-12;

// -w_t log p_t (p_t floored at 1e-12). Unit weights give plain cross-entropy.
double weighted_ce_loss(std::span<const double> probs, int target, std::span<const double> weights);
// d loss / d logits = w_t (softmax(logits) - onehot(t)).
std::vector<double> loss_grad_logits(std::span<const double> logits, int target,
                                     std::span<const double> weights);

// Step decay: lr0 until first_decay_epoch, then one more factor every decay_period epochs.
double lr_schedule(int epoch, const TrainerConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const TrainerConfig& config);

// Multinomial logistic regression over featurize(image, feature_side).
struct LinearSoftmaxModel {
  int classes = 0;
  int feature_side = 16;
  std::vector<double> weights;  // classes x dim, row-major
  std::vector<double> bias;     // classes

  LinearSoftmaxModel() = default;
  LinearSoftmaxModel(int classes, int feature_side);

  std::size_t dim() const noexcept {
    return 3 * static_cast<std::size_t>(feature_side) * static_cast<std::size_t>(feature_side);
  }
  std::vector<double> logits(std::span<const double> features) const;

  friend bool operator==(const LinearSoftmaxModel&, const LinearSoftmaxModel&) = default;
};

ProbVector predict(const LinearSoftmaxModel& model, const ImageU8& image);
ProbVector predict_features(const LinearSoftmaxModel& model, std::span<const double> features);

// Mean weighted loss and its gradients over a batch of feature vectors.
struct BatchGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};
BatchGradient batch_gradient(const LinearSoftmaxModel& model, std::span<const std::vector<double>> features,
                             std::span<const int> targets, std::span<const double> class_weights);

struct TrainResult {
  LinearSoftmaxModel model;
  std::map<int, LinearSoftmaxModel> checkpoints;  // epoch -> state after that many epochs
  std::vector<double> epoch_loss;                  // mean weighted loss per epoch
};

// Training loop: per epoch shuffle; per sample apply_policy, random_crop, featurize;
// minibatch Adam on the weighted loss.
TrainResult train_reference(const DatasetManifest& train, const ImageStore& store, const LcaPolicy& policy,
                            const TrainerConfig& config, const ClassWeights& weights);

// Same loop over precomputed feature vectors (no augmentation or cropping).
TrainResult train_on_features(std::span<const std::vector<double>> features, std::span<const int> targets,
                              int classes, const TrainerConfig& config, const ClassWeights& weights);

nlohmann::json to_json(const LinearSoftmaxModel& model);
LinearSoftmaxModel model_from_json(const nlohmann::json& j);

struct FitRequest {
  std::string run_id;
  const DatasetManifest* train = nullptr;
  LcaPolicy policy;
  TrainerConfig config;
  ClassWeights weights;
};

// Trainer contract used by the search: fit once, then predict at any checkpoint epoch.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const FitRequest& request) = 0;
  virtual std::vector<int> checkpoint_epochs() const = 0;
  virtual ProbVector predict(const SampleMeta& sample, int epoch) = 0;
};

// Built-in linear model; predictions average the 16 multi-crop views.
class ReferenceClassifier : public Classifier {
 public:
  explicit ReferenceClassifier(const ImageStore& store) : store_(store) {}
  void fit(const FitRequest& request) override;
  std::vector<int> checkpoint_epochs() const override;
  ProbVector predict(const SampleMeta& sample, int epoch) override;
  const TrainResult& result() const { return result_; }

 private:
  const ImageStore& store_;
  TrainerConfig config_;
  TrainResult result_;
  std::map<std::string, std::vector<std::vector<double>>> crop_features_;  // by image id
};

}  // namespace lca
