#include "lca/policy.hpp"

#include <cmath>
#include <fstream>

#include "lca/error.hpp"

namespace lca {

using nlohmann::json;

void LcaPolicy::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw ValidationError("policy probability must lie in [0, 1], got " + std::to_string(probability));
  }
  if (sub_policies.empty()) throw ValidationError("policy has no sub-policies");
  if (!(noise_scale >= 0.0)) throw ValidationError("noise_scale must be non-negative");
}

std::vector<SubPolicy> lca_default() {
  using K = OperationKind;
  return {
      {1, K::kSamplePairing, K::kRotate}, {2, K::kGaussianNoise, K::kFlip},
      {3, K::kSolarizeAdd, K::kCutout},   {4, K::kColor, K::kShearX},
      {5, K::kContrast, K::kShearY},      {6, K::kBrightness, K::kScale},
      {7, K::kSharpness, K::kRotate},     {8, K::kColorShift, K::kScale},
      {9, K::kEqualizeYUV, K::kShearX},   {10, K::kPosterize, K::kShearY},
      {11, K::kAutoContrast, K::kFlip},   {12, K::kEqualize, K::kCutout},
  };
}

std::vector<double> probability_ladder() { return {0.1, 0.3, 0.5, 0.7, 0.9}; }

std::size_t search_space_size(std::span<const SubPolicy> sub_policies, std::span<const double> ladder) {
  return sub_policies.size() * ladder.size();
}

std::uint64_t augmentation_seed(std::uint64_t policy_seed, std::uint64_t sample_id, std::uint64_t epoch) {
  return derive_seed(policy_seed, "augment", {sample_id, epoch});
}

OpDraw draw_operation(OperationKind kind, int width, int height, std::size_t partner_count, Rng& rng) {
  OpDraw d;
  d.kind = kind;
  const OperationSpec& spec = operation_spec(kind);
  if (spec.range) {
    const MagnitudeRange& r = *spec.range;
    if (kind == OperationKind::kColorShift) {
      for (auto& s : d.shift) s = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(r.lo),
                                                                   static_cast<std::int64_t>(r.hi)));
    } else if (r.integral) {
      d.magnitude = static_cast<double>(
          rng.uniform_int(static_cast<std::int64_t>(r.lo), static_cast<std::int64_t>(r.hi)));
    } else {
      d.magnitude = rng.uniform(r.lo, r.hi);
    }
  }
  switch (kind) {
    case OperationKind::kSamplePairing:
      d.partner = partner_count == 0 ? -1 : static_cast<int>(rng.index(partner_count));
      break;
    case OperationKind::kGaussianNoise:
      d.noise_seed = rng.next_u64();
      break;
    case OperationKind::kFlip:
      d.axis = rng.bernoulli(0.5) ? FlipAxis::kHorizontal : FlipAxis::kVertical;
      break;
    case OperationKind::kCutout:
      d.center_x = static_cast<int>(rng.uniform_int(0, width - 1));
      d.center_y = static_cast<int>(rng.uniform_int(0, height - 1));
      break;
    default:
      break;
  }
  return d;
}

ImageU8 apply_operation(const ImageU8& image, const OpDraw& d, const BatchContext& batch,
                        double noise_scale) {
  switch (d.kind) {
    case OperationKind::kSamplePairing: {
      if (d.partner < 0) return image;
      if (static_cast<std::size_t>(d.partner) >= batch.partners.size()) {
        throw ValidationError("sample pairing partner " + std::to_string(d.partner) +
                              " not present in batch");
      }
      return sample_pairing(image, *batch.partners[static_cast<std::size_t>(d.partner)], d.magnitude);
    }
    case OperationKind::kGaussianNoise: {
      Rng noise(d.noise_seed);
      return gaussian_noise(image, d.magnitude, noise, noise_scale);
    }
    case OperationKind::kSolarizeAdd:
      return solarize_add(image, static_cast<int>(d.magnitude));
    case OperationKind::kColor:
      return enhance_color(image, d.magnitude);
    case OperationKind::kContrast:
      return enhance_contrast(image, d.magnitude);
    case OperationKind::kBrightness:
      return enhance_brightness(image, d.magnitude);
    case OperationKind::kSharpness:
      return enhance_sharpness(image, d.magnitude);
    case OperationKind::kColorShift:
      return color_shift(image, d.shift[0], d.shift[1], d.shift[2]);
    case OperationKind::kEqualizeYUV:
      return equalize_yuv(image);
    case OperationKind::kEqualize:
      return equalize(image);
    case OperationKind::kPosterize:
      return posterize(image, static_cast<int>(d.magnitude));
    case OperationKind::kAutoContrast:
      return autocontrast(image);
    case OperationKind::kRotate:
      return rotate(image, d.magnitude);
    case OperationKind::kFlip:
      return flip(image, d.axis);
    case OperationKind::kCutout:
      return cutout(image, static_cast<int>(d.magnitude), d.center_x, d.center_y);
    case OperationKind::kShearX:
      return shear_x(image, d.magnitude);
    case OperationKind::kShearY:
      return shear_y(image, d.magnitude);
    case OperationKind::kScale:
      return scale(image, d.magnitude);
  }
  throw ValidationError("unhandled operation kind");
}

Augmented apply_sub_policy(const ImageU8& image, const BatchContext& batch, const SubPolicy& sub,
                           const LcaPolicy& policy, Rng& rng) {
  Augmented out{image, {}};
  out.record.fired = true;
  out.record.sub_policy_id = sub.id;
  for (OperationKind kind : {sub.color_op, sub.geom_op}) {
    OpDraw d = draw_operation(kind, out.image.width(), out.image.height(), batch.partners.size(), rng);
    out.image = apply_operation(out.image, d, batch, policy.noise_scale);
    out.record.ops.push_back(d);
  }
  return out;
}

Augmented apply_policy(const ImageU8& image, const BatchContext& batch, const LcaPolicy& policy, Rng& rng) {
  if (!(rng.uniform() < policy.probability)) return {image, {}};
  const SubPolicy& sub = policy.sub_policies[rng.index(policy.sub_policies.size())];
  return apply_sub_policy(image, batch, sub, policy, rng);
}

ImageU8 replay(const ImageU8& image, const AppliedRecord& record, const BatchContext& batch,
               double noise_scale) {
  if (!record.fired) return image;
  ImageU8 out = image;
  for (const OpDraw& d : record.ops) out = apply_operation(out, d, batch, noise_scale);
  return out;
}

ImageU8 general_augmentation(const ImageU8& image, Rng& rng) {
  ImageU8 out = image;
  if (rng.bernoulli(0.5)) {
    out = flip(out, rng.bernoulli(0.5) ? FlipAxis::kHorizontal : FlipAxis::kVertical);
  }
  out = enhance_brightness(out, rng.uniform(0.8, 1.2));
  out = enhance_contrast(out, rng.uniform(0.8, 1.2));
  out = enhance_color(out, rng.uniform(0.8, 1.2));
  return out;
}

json to_json(const OpDraw& d) {
  json j{{"op", operation_name(d.kind)}};
  switch (d.kind) {
    case OperationKind::kColorShift:
      j["shift"] = d.shift;
      break;
    case OperationKind::kFlip:
      j["axis"] = d.axis == FlipAxis::kHorizontal ? "horizontal" : "vertical";
      break;
    case OperationKind::kEqualize:
    case OperationKind::kEqualizeYUV:
    case OperationKind::kAutoContrast:
      break;
    default:
      j["magnitude"] = d.magnitude;
  }
  if (d.kind == OperationKind::kCutout) j["center"] = {d.center_x, d.center_y};
  if (d.kind == OperationKind::kGaussianNoise) j["noise_seed"] = d.noise_seed;
  if (d.kind == OperationKind::kSamplePairing) j["partner"] = d.partner;
  return j;
}

OpDraw op_draw_from_json(const json& j) {
  OpDraw d;
  d.kind = parse_operation(j.at("op").get<std::string>());
  d.magnitude = j.value("magnitude", 0.0);
  if (j.contains("shift")) d.shift = j.at("shift").get<std::array<int, 3>>();
  if (j.contains("axis")) {
    const auto axis = j.at("axis").get<std::string>();
    if (axis != "horizontal" && axis != "vertical") throw ValidationError("bad flip axis " + axis);
    d.axis = axis == "horizontal" ? FlipAxis::kHorizontal : FlipAxis::kVertical;
  }
  if (j.contains("center")) {
    d.center_x = j.at("center").at(0).get<int>();
    d.center_y = j.at("center").at(1).get<int>();
  }
  d.noise_seed = j.value("noise_seed", std::uint64_t{0});
  d.partner = j.value("partner", -1);
  return d;
}

json to_json(const AppliedRecord& r) {
  json j{{"fired", r.fired}};
  if (!r.fired) return j;
  j["sub_policy_id"] = r.sub_policy_id.value_or(0);
  j["ops"] = json::array();
  for (const auto& d : r.ops) j["ops"].push_back(to_json(d));
  return j;
}

AppliedRecord applied_record_from_json(const json& j) {
  AppliedRecord r;
  r.fired = j.at("fired").get<bool>();
  if (!r.fired) return r;
  r.sub_policy_id = j.at("sub_policy_id").get<int>();
  for (const auto& op : j.at("ops")) r.ops.push_back(op_draw_from_json(op));
  return r;
}

json to_json(const LcaPolicy& p) {
  json subs = json::array();
  for (const auto& s : p.sub_policies) {
    subs.push_back({{"id", s.id}, {"color_op", operation_name(s.color_op)},
                    {"geom_op", operation_name(s.geom_op)}});
  }
  return {{"probability", p.probability}, {"seed", p.seed}, {"noise_scale", p.noise_scale},
          {"sub_policies", subs}};
}

LcaPolicy policy_from_json(const json& j) {
  LcaPolicy p;
  try {
    p.probability = j.at("probability").get<double>();
    p.seed = j.value("seed", std::uint64_t{0});
    p.noise_scale = j.value("noise_scale", 1.0);
    if (j.contains("sub_policies") && !j.at("sub_policies").is_null()) {
      int next_id = 1;
      for (const auto& s : j.at("sub_policies")) {
        SubPolicy sp;
        sp.id = s.value("id", next_id);
        sp.color_op = parse_operation(s.at("color_op").get<std::string>());
        sp.geom_op = parse_operation(s.at("geom_op").get<std::string>());
        p.sub_policies.push_back(sp);
        next_id = sp.id + 1;
      }
    } else {
      p.sub_policies = lca_default();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed policy: ") + e.what());
  }
  p.validate();
  return p;
}

LcaPolicy load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open policy file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("policy file " + path + " is not valid JSON: " + e.what());
  }
  return policy_from_json(j);
}

}  // namespace lca
