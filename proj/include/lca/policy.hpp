#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lca/image.hpp"
#include "lca/rng.hpp"
#include "lca/transforms.hpp"

namespace lca {

// A (color operation, geometric operation) pair; both run when the sub-policy fires.
struct SubPolicy {
  int id = 0;
  OperationKind color_op;
  OperationKind geom_op;

  friend bool operator==(const SubPolicy&, const SubPolicy&) = default;
};

struct LcaPolicy {
  std::vector<SubPolicy> sub_policies;
  double probability = 0.0;
  std::uint64_t seed = 0;
  // Multiplier on the Gaussian noise sigma (sigma = magnitude * 255 * noise_scale).
  double noise_scale = 1.0;

  void validate() const;
};

// The twelve sub-policies, in table order.
std::vector<SubPolicy> lca_default();
std::vector<double> probability_ladder();
std::size_t search_space_size(std::span<const SubPolicy> sub_policies, std::span<const double> ladder);

// Everything drawn for one operation, enough to replay it exactly.
struct OpDraw {
  OperationKind kind = OperationKind::kColor;
  double magnitude = 0.0;
  std::array<int, 3> shift{};   // ColorShift
  FlipAxis axis = FlipAxis::kHorizontal;
  int center_x = 0;             // Cutout
  int center_y = 0;
  std::uint64_t noise_seed = 0; // GaussianNoise
  int partner = -1;             // SamplePairing; -1 means no partner (identity)

  friend bool operator==(const OpDraw&, const OpDraw&) = default;
};

struct AppliedRecord {
  bool fired = false;
  std::optional<int> sub_policy_id;
  std::vector<OpDraw> ops;

  friend bool operator==(const AppliedRecord&, const AppliedRecord&) = default;
};

// Partner images available to SamplePairing (the rest of the current batch).
struct BatchContext {
  std::vector<const ImageU8*> partners;
};

struct Augmented {
  ImageU8 image;
  AppliedRecord record;
};

// Draws the parameters of `kind` for an image of the given size.
OpDraw draw_operation(OperationKind kind, int width, int height, std::size_t partner_count, Rng& rng);
// Applies one fully drawn operation.
ImageU8 apply_operation(const ImageU8& image, const OpDraw& draw, const BatchContext& batch,
                        double noise_scale = 1.0);

// One Bernoulli(P) gate; if it fires, a uniformly chosen sub-policy runs its
// color op then its geometric op with magnitudes drawn from their ranges.
Augmented apply_policy(const ImageU8& image, const BatchContext& batch, const LcaPolicy& policy, Rng& rng);
// Runs a specific sub-policy unconditionally (used for previews).
Augmented apply_sub_policy(const ImageU8& image, const BatchContext& batch, const SubPolicy& sub,
                           const LcaPolicy& policy, Rng& rng);
// Reproduces the output of apply_policy from its record.
ImageU8 replay(const ImageU8& image, const AppliedRecord& record, const BatchContext& batch,
               double noise_scale = 1.0);

// Baseline: random flip plus brightness/contrast/color jitter in [0.8, 1.2].
ImageU8 general_augmentation(const ImageU8& image, Rng& rng);

// Per-sample augmentation stream for a given epoch.
std::uint64_t augmentation_seed(std::uint64_t policy_seed, std::uint64_t sample_id, std::uint64_t epoch);

nlohmann::json to_json(const OpDraw& draw);
OpDraw op_draw_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AppliedRecord& record);
AppliedRecord applied_record_from_json(const nlohmann::json& j);

// Policy file: {"probability": P, "seed": S, "sub_policies": [{"color_op": .., "geom_op": ..}]}.
// Missing sub_policies means lca_default().
nlohmann::json to_json(const LcaPolicy& policy);
LcaPolicy policy_from_json(const nlohmann::json& j);
LcaPolicy load_policy_file(const std::string& path);

}  // namespace lca
