#include "lca/transforms.hpp"

#include <algorithm>
#include <cctype>
#include <numbers>

#include "lca/error.hpp"

namespace lca {

namespace {

constexpr MagnitudeRange real_range(double lo, double hi) { return {lo, hi, false}; }
constexpr MagnitudeRange int_range(double lo, double hi) { return {lo, hi, true}; }

const std::array<OperationSpec, kOperationCount> kTable = {{
    {OperationKind::kSamplePairing, "SamplePairing", real_range(0.0, 0.4)},
    {OperationKind::kGaussianNoise, "GaussianNoise", real_range(0.0, 0.4)},
    {OperationKind::kSolarizeAdd, "SolarizeAdd", int_range(1, 110)},
    {OperationKind::kColor, "Color", real_range(0.1, 1.9)},
    {OperationKind::kContrast, "Contrast", real_range(0.1, 1.9)},
    {OperationKind::kBrightness, "Brightness", real_range(0.1, 1.9)},
    {OperationKind::kSharpness, "Sharpness", real_range(0.1, 1.9)},
    {OperationKind::kColorShift, "ColorShift", int_range(-20, 20)},
    {OperationKind::kEqualizeYUV, "EqualizeYUV", std::nullopt},
    {OperationKind::kEqualize, "Equalize", std::nullopt},
    {OperationKind::kPosterize, "Posterize", int_range(4, 8)},
    {OperationKind::kAutoContrast, "AutoContrast", std::nullopt},
    {OperationKind::kRotate, "Rotate", real_range(-30.0, 30.0)},
    {OperationKind::kFlip, "Flip", std::nullopt},
    {OperationKind::kCutout, "Cutout", int_range(0, 60)},
    {OperationKind::kShearX, "ShearX", real_range(-0.3, 0.3)},
    {OperationKind::kShearY, "ShearY", real_range(-0.3, 0.3)},
    {OperationKind::kScale, "Scale", real_range(0.6, 1.4)},
}};

std::string normalize_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Applies f to each channel value through a 256-entry table.
template <typename F>
ImageU8 map_values(const ImageU8& image, F&& f) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = f(v);
  ImageU8 out = image;
  for (auto& v : out.bytes()) v = lut[v];
  return out;
}

// out = round(D + m (P - D)), D the degenerate image.
ImageU8 blend(const ImageU8& degenerate, const ImageU8& image, double m) {
  ImageU8 out = image;
  const auto src = image.bytes();
  const auto deg = degenerate.bytes();
  auto dst = out.bytes();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double d = deg[i];
    dst[i] = to_u8(d + m * (static_cast<double>(src[i]) - d));
  }
  return out;
}

// Snap coordinates within 1e-9 of an integer so exact warps (180 degrees, unit
// scale) land on pixel centers despite trigonometric round-off.
double snap(double v) {
  const double r = static_cast<double>(static_cast<std::int64_t>(v < 0.0 ? v - 0.5 : v + 0.5));
  const double d = v - r;
  return (d < 1e-9 && d > -1e-9) ? r : v;
}

template <typename Map>
ImageU8 warp(const ImageU8& image, Map&& inverse_map) {
  const int w = image.width();
  const int h = image.height();
  ImageU8 out(w, h);
  const std::uint8_t* src = image.bytes().data();
  std::uint8_t* dst = out.bytes().data();
  const auto stride = static_cast<std::size_t>(w) * 3;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x, dst += 3) {
      auto [sx, sy] = inverse_map(static_cast<double>(x), static_cast<double>(y));
      sx = snap(sx);
      sy = snap(sy);
      // Interior fast path; same weights and summation order as bilinear_sample.
      if (sx >= 0.0 && sy >= 0.0 && sx < w - 1 && sy < h - 1) {
        const int x0 = static_cast<int>(sx);
        const int y0 = static_cast<int>(sy);
        const double tx = sx - x0;
        const double ty = sy - y0;
        const double w00 = (1.0 - tx) * (1.0 - ty);
        const double w10 = tx * (1.0 - ty);
        const double w01 = (1.0 - tx) * ty;
        const double w11 = tx * ty;
        const std::uint8_t* p00 = src + static_cast<std::size_t>(y0) * stride + static_cast<std::size_t>(x0) * 3;
        const std::uint8_t* p01 = p00 + stride;
        for (int c = 0; c < 3; ++c) {
          double v = 0.0;
          if (w00 != 0.0) v += w00 * p00[c];
          if (w10 != 0.0) v += w10 * p00[3 + c];
          if (w01 != 0.0) v += w01 * p01[c];
          if (w11 != 0.0) v += w11 * p01[3 + c];
          dst[c] = to_u8(v);
        }
        continue;
      }
      const Rgb c = bilinear_sample(image, sx, sy, kGray);
      dst[0] = c.r;
      dst[1] = c.g;
      dst[2] = c.b;
    }
  }
  return out;
}

std::array<std::array<std::uint64_t, 256>, 3> channel_histograms(const ImageU8& image) {
  std::array<std::array<std::uint64_t, 256>, 3> h{};
  const auto bytes = image.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    ++h[0][bytes[i]];
    ++h[1][bytes[i + 1]];
    ++h[2][bytes[i + 2]];
  }
  return h;
}

}  // namespace

const std::array<OperationSpec, kOperationCount>& operation_table() { return kTable; }

const OperationSpec& operation_spec(OperationKind kind) {
  return kTable[static_cast<std::size_t>(kind)];
}

std::string_view operation_name(OperationKind kind) { return operation_spec(kind).name; }

OperationKind parse_operation(std::string_view name) {
  const std::string key = normalize_name(name);
  for (const auto& spec : kTable) {
    if (normalize_name(spec.name) == key) return spec.kind;
  }
  throw ValidationError("unknown operation '" + std::string(name) + "'");
}

ImageU8 enhance_color(const ImageU8& image, double m) {
  ImageU8 gray = image;
  auto bytes = gray.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint8_t l = luminance(bytes[i], bytes[i + 1], bytes[i + 2]);
    bytes[i] = bytes[i + 1] = bytes[i + 2] = l;
  }
  return blend(gray, image, m);
}

ImageU8 enhance_contrast(const ImageU8& image, double m) {
  const auto bytes = image.bytes();
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    sum += luminance(bytes[i], bytes[i + 1], bytes[i + 2]);
  }
  const std::uint64_t n = image.pixel_count();
  if (n == 0) return image;
  // round-half-up of sum / n in integers
  const auto mean = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
  return blend(ImageU8(image.width(), image.height(), Rgb{mean, mean, mean}), image, m);
}

ImageU8 enhance_brightness(const ImageU8& image, double m) {
  return map_values(image, [m](int v) { return to_u8(m * v); });
}

ImageU8 enhance_sharpness(const ImageU8& image, double m) {
  ImageU8 smooth = image;
  const int w = image.width();
  const int h = image.height();
  const std::uint8_t* src = image.bytes().data();
  std::uint8_t* dst = smooth.bytes().data();
  const auto stride = static_cast<std::size_t>(w) * 3;
  for (int y = 1; y + 1 < h; ++y) {
    const std::uint8_t* up = src + static_cast<std::size_t>(y - 1) * stride;
    const std::uint8_t* mid = up + stride;
    const std::uint8_t* down = mid + stride;
    std::uint8_t* out = dst + static_cast<std::size_t>(y) * stride;
    for (std::size_t i = 3; i + 3 < stride; ++i) {
      // 3x3 box plus 4 extra center weights: kernel [[1,1,1],[1,5,1],[1,1,1]] / 13.
      const int acc = up[i - 3] + up[i] + up[i + 3] + mid[i - 3] + 5 * mid[i] + mid[i + 3] + down[i - 3] +
                      down[i] + down[i + 3];
      out[i] = static_cast<std::uint8_t>((2 * acc + 13) / 26);
    }
  }
  return blend(smooth, image, m);
}

ImageU8 solarize_add(const ImageU8& image, int add) {
  return map_values(image, [add](int v) {
    return v < 128 ? to_u8(static_cast<double>(v + add)) : static_cast<std::uint8_t>(v);
  });
}

ImageU8 posterize(const ImageU8& image, int bits) {
  if (bits < 0 || bits > 8) throw ValidationError("posterize bits must be in [0, 8]");
  const int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
  return map_values(image, [mask](int v) { return static_cast<std::uint8_t>(v & mask); });
}

std::array<std::uint8_t, 256> equalize_lut(const std::array<std::uint64_t, 256>& histogram) {
  std::array<std::uint8_t, 256> lut{};
  std::uint64_t n = 0;
  std::uint64_t cdf_min = 0;
  for (auto count : histogram) {
    if (cdf_min == 0 && count != 0) cdf_min = count;
    n += count;
  }
  if (n == cdf_min) {
    for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(v);
    return lut;
  }
  const std::uint64_t den = n - cdf_min;
  std::uint64_t cdf = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    cdf += histogram[v];
    const std::uint64_t num = cdf >= cdf_min ? (cdf - cdf_min) * 255 : 0;
    lut[v] = static_cast<std::uint8_t>((2 * num + den) / (2 * den));
  }
  return lut;
}

ImageU8 equalize(const ImageU8& image) {
  const auto hist = channel_histograms(image);
  const std::array<std::array<std::uint8_t, 256>, 3> luts = {
      equalize_lut(hist[0]), equalize_lut(hist[1]), equalize_lut(hist[2])};
  ImageU8 out = image;
  auto bytes = out.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    for (std::size_t c = 0; c < 3; ++c) bytes[i + c] = luts[c][bytes[i + c]];
  }
  return out;
}

ImageU8 equalize_yuv(const ImageU8& image) {
  ImageU8 yuv = image;
  auto bytes = yuv.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const YCbCr c = rgb_to_ycbcr({bytes[i], bytes[i + 1], bytes[i + 2]});
    bytes[i] = c.y;
    bytes[i + 1] = c.cb;
    bytes[i + 2] = c.cr;
  }
  ImageU8 eq = equalize(yuv);
  auto out = eq.bytes();
  for (std::size_t i = 0; i < out.size(); i += 3) {
    const Rgb c = ycbcr_to_rgb({out[i], out[i + 1], out[i + 2]});
    out[i] = c.r;
    out[i + 1] = c.g;
    out[i + 2] = c.b;
  }
  return eq;
}

ImageU8 autocontrast(const ImageU8& image) {
  std::array<int, 3> lo{255, 255, 255};
  std::array<int, 3> hi{0, 0, 0};
  const auto src = image.bytes();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    for (std::size_t c = 0; c < 3; ++c) {
      lo[c] = std::min<int>(lo[c], src[i + c]);
      hi[c] = std::max<int>(hi[c], src[i + c]);
    }
  }
  std::array<std::array<std::uint8_t, 256>, 3> luts{};
  for (std::size_t c = 0; c < 3; ++c) {
    for (int v = 0; v < 256; ++v) {
      if (lo[c] == hi[c]) {
        luts[c][static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(v);
        continue;
      }
      const int span = hi[c] - lo[c];
      const int num = std::clamp(v - lo[c], 0, span) * 255;
      luts[c][static_cast<std::size_t>(v)] = static_cast<std::uint8_t>((2 * num + span) / (2 * span));
    }
  }
  ImageU8 out = image;
  auto dst = out.bytes();
  for (std::size_t i = 0; i < dst.size(); i += 3) {
    for (std::size_t c = 0; c < 3; ++c) dst[i + c] = luts[c][dst[i + c]];
  }
  return out;
}

ImageU8 color_shift(const ImageU8& image, int dr, int dg, int db) {
  const std::array<int, 3> delta{dr, dg, db};
  ImageU8 out = image;
  auto dst = out.bytes();
  for (std::size_t i = 0; i < dst.size(); i += 3) {
    for (std::size_t c = 0; c < 3; ++c) {
      dst[i + c] = static_cast<std::uint8_t>(std::clamp(dst[i + c] + delta[c], 0, 255));
    }
  }
  return out;
}

ImageU8 gaussian_noise(const ImageU8& image, double m, Rng& rng, double noise_scale) {
  const double sigma = m * 255.0 * noise_scale;
  if (sigma == 0.0) return image;
  ImageU8 out = image;
  for (auto& v : out.bytes()) v = to_u8(static_cast<double>(v) + rng.normal() * sigma);
  return out;
}

ImageU8 sample_pairing(const ImageU8& a, const ImageU8& b, double w) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ValidationError("sample_pairing: image dimensions differ (" +
                          std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                          " vs " + std::to_string(b.width()) + "x" +
                          std::to_string(b.height()) + ")");
  }
  ImageU8 out = a;
  const auto pb = b.bytes();
  auto dst = out.bytes();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = to_u8((1.0 - w) * dst[i] + w * pb[i]);
  }
  return out;
}

ImageU8 rotate(const ImageU8& image, double degrees) {
  if (degrees == 0.0) return image;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = (image.width() - 1) / 2.0;
  const double cy = (image.height() - 1) / 2.0;
  // Positive angles turn the content counter-clockwise as displayed (y down).
  return warp(image, [&](double x, double y) {
    const double dx = x - cx;
    const double dy = y - cy;
    return std::pair{cx + c * dx - s * dy, cy + s * dx + c * dy};
  });
}

ImageU8 shear_x(const ImageU8& image, double m) {
  if (m == 0.0) return image;
  const double cy = (image.height() - 1) / 2.0;
  return warp(image, [&](double x, double y) { return std::pair{x + m * (y - cy), y}; });
}

ImageU8 shear_y(const ImageU8& image, double m) {
  if (m == 0.0) return image;
  const double cx = (image.width() - 1) / 2.0;
  return warp(image, [&](double x, double y) { return std::pair{x, y + m * (x - cx)}; });
}

ImageU8 scale(const ImageU8& image, double s) {
  if (!(s > 0.0)) throw ValidationError("scale factor must be positive");
  if (s == 1.0) return image;
  const double cx = (image.width() - 1) / 2.0;
  const double cy = (image.height() - 1) / 2.0;
  return warp(image, [&](double x, double y) {
    return std::pair{cx + (x - cx) / s, cy + (y - cy) / s};
  });
}

ImageU8 flip(const ImageU8& image, FlipAxis axis) {
  ImageU8 out(image.width(), image.height());
  const int w = image.width();
  const int h = image.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (axis == FlipAxis::kHorizontal) {
        out.set(w - 1 - x, y, image.at(x, y));
      } else {
        out.set(x, h - 1 - y, image.at(x, y));
      }
    }
  }
  return out;
}

ImageU8 cutout(const ImageU8& image, int side, int cx, int cy) {
  if (side < 0) throw ValidationError("cutout side must be non-negative");
  if (side == 0) return image;
  ImageU8 out = image;
  const int x0 = std::max(0, cx - side / 2);
  const int y0 = std::max(0, cy - side / 2);
  const int x1 = std::min(image.width(), cx - side / 2 + side);
  const int y1 = std::min(image.height(), cy - side / 2 + side);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.set(x, y, kGray);
  }
  return out;
}

ImageU8 cutout(const ImageU8& image, int side, Rng& rng) {
  const int cx = static_cast<int>(rng.uniform_int(0, image.width() - 1));
  const int cy = static_cast<int>(rng.uniform_int(0, image.height() - 1));
  return cutout(image, side, cx, cy);
}

}  // namespace lca
