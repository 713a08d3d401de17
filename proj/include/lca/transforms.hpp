#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "lca/image.hpp"
#include "lca/rng.hpp"

namespace lca {

enum class OperationKind {
  kSamplePairing,
  kGaussianNoise,
  kSolarizeAdd,
  kColor,
  kContrast,
  kBrightness,
  kSharpness,
  kColorShift,
  kEqualizeYUV,
  kEqualize,
  kPosterize,
  kAutoContrast,
  kRotate,
  kFlip,
  kCutout,
  kShearX,
  kShearY,
  kScale,
};

inline constexpr std::size_t kOperationCount = 18;

struct MagnitudeRange {
  double lo = 0.0;
  double hi = 0.0;
  bool integral = false;
};

struct OperationSpec {
  OperationKind kind;
  std::string_view name;
  // Absent for Equalize, EqualizeYUV, AutoContrast and Flip.
  std::optional<MagnitudeRange> range;
};

const std::array<OperationSpec, kOperationCount>& operation_table();
const OperationSpec& operation_spec(OperationKind kind);
std::string_view operation_name(OperationKind kind);
// Case-insensitive; underscores ignored ("Sample_Pairing" == "samplepairing").
OperationKind parse_operation(std::string_view name);

enum class FlipAxis { kHorizontal, kVertical };

// Color (enhance) operations. Magnitude 1 is the identity; 0 is the degenerate image.
ImageU8 enhance_color(const ImageU8& image, double m);
ImageU8 enhance_contrast(const ImageU8& image, double m);
ImageU8 enhance_brightness(const ImageU8& image, double m);
ImageU8 enhance_sharpness(const ImageU8& image, double m);

ImageU8 solarize_add(const ImageU8& image, int add);
ImageU8 posterize(const ImageU8& image, int bits);
ImageU8 equalize(const ImageU8& image);
ImageU8 equalize_yuv(const ImageU8& image);
ImageU8 autocontrast(const ImageU8& image);
ImageU8 color_shift(const ImageU8& image, int dr, int dg, int db);

// sigma = m * 255 * noise_scale.
ImageU8 gaussian_noise(const ImageU8& image, double m, Rng& rng, double noise_scale = 1.0);
ImageU8 sample_pairing(const ImageU8& a, const ImageU8& b, double w);

// Geometric warps: inverse-mapped, bilinear, gray fill, same canvas.
ImageU8 rotate(const ImageU8& image, double degrees);
ImageU8 shear_x(const ImageU8& image, double m);
ImageU8 shear_y(const ImageU8& image, double m);
ImageU8 scale(const ImageU8& image, double s);
ImageU8 flip(const ImageU8& image, FlipAxis axis);

// Gray square of side `side` centered at (cx, cy), clipped to the image.
ImageU8 cutout(const ImageU8& image, int side, int cx, int cy);
ImageU8 cutout(const ImageU8& image, int side, Rng& rng);

// Per-channel 256-entry equalization table (identity when the channel is constant).
std::array<std::uint8_t, 256> equalize_lut(const std::array<std::uint64_t, 256>& histogram);

}  // namespace lca
