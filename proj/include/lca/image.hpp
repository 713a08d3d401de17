#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lca {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Unclamped real-valued pixel used for blending and warping.
struct PixelF {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

inline constexpr Rgb kGray{128, 128, 128};

// Round half up, then clamp to [0, 255]. The single rounding rule used everywhere.
inline std::uint8_t to_u8(double v) {
  const double t = v + 0.5;
  if (!(t >= 1.0)) return 0;  // also maps NaN to 0
  if (t >= 255.0) return 255;
  return static_cast<std::uint8_t>(t);  // truncation is floor for t >= 1
}

inline Rgb to_rgb(const PixelF& p) { return {to_u8(p.r), to_u8(p.g), to_u8(p.b)}; }

// Row-major 8-bit RGB raster. Width and height are at least 1.
class ImageU8 {
 public:
  ImageU8() = default;
  ImageU8(int width, int height, Rgb fill = {});
  ImageU8(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  Rgb at(int x, int y) const {
    const std::uint8_t* p = &data_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = &data_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  friend bool operator==(const ImageU8&, const ImageU8&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Rounded luma 0.299R + 0.587G + 0.114B.
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);
inline std::uint8_t luminance(Rgb c) { return luminance(c.r, c.g, c.b); }

struct YCbCr {
  std::uint8_t y = 0;
  std::uint8_t cb = 128;
  std::uint8_t cr = 128;

  friend bool operator==(const YCbCr&, const YCbCr&) = default;
};

// Full-range BT.601 conversion in both directions, rounded and clamped.
YCbCr rgb_to_ycbcr(Rgb c);
Rgb ycbcr_to_rgb(YCbCr c);

// Bilinear interpolation with pixel i centered at coordinate i. Neighbors that
// fall outside the image contribute `fill`.
Rgb bilinear_sample(const ImageU8& image, double x, double y, Rgb fill);
PixelF bilinear_sample_f(const ImageU8& image, double x, double y, Rgb fill);

// Binary P6 with maxval 255.
ImageU8 load_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_ppm(const ImageU8& image);

ImageU8 read_image_file(const std::string& path);
void write_image_file(const std::string& path, const ImageU8& image);

}  // namespace lca
