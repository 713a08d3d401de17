#include "lca/image.hpp"

#include <fstream>
#include <iterator>

#include "lca/error.hpp"

namespace lca {

ImageU8::ImageU8(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw ValidationError("image dimensions must be positive, got " + std::to_string(width) +
                          "x" + std::to_string(height));
  }
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

ImageU8::ImageU8(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw ValidationError("image dimensions must be positive");
  }
  if (data_.size() != pixel_count() * 3) {
    throw ValidationError("image buffer holds " + std::to_string(data_.size()) +
                          " bytes, expected " + std::to_string(pixel_count() * 3));
  }
}

namespace {

// Round-half-up of num / 1e6 for integer num, floor semantics for negatives.
std::int64_t round_micro(std::int64_t num) {
  const std::int64_t shifted = num + 500000;
  std::int64_t q = shifted / 1000000;
  if (shifted % 1000000 != 0 && shifted < 0) --q;
  return q;
}

std::uint8_t clamp_u8(std::int64_t v) {
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

}  // namespace

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // Integer form keeps exact halves (e.g. x.5) rounding up regardless of FP error.
  const int v = (299 * r + 587 * g + 114 * b + 500) / 1000;
  return static_cast<std::uint8_t>(v > 255 ? 255 : v);
}

YCbCr rgb_to_ycbcr(Rgb c) {
  const std::int64_t r = c.r, g = c.g, b = c.b;
  const std::int64_t y = 299000 * r + 587000 * g + 114000 * b;
  const std::int64_t cb = 128000000 - 168736 * r - 331264 * g + 500000 * b;
  const std::int64_t cr = 128000000 + 500000 * r - 418688 * g - 81312 * b;
  return {clamp_u8(round_micro(y)), clamp_u8(round_micro(cb)), clamp_u8(round_micro(cr))};
}

Rgb ycbcr_to_rgb(YCbCr c) {
  const std::int64_t y = static_cast<std::int64_t>(c.y) * 1000000;
  const std::int64_t cb = static_cast<std::int64_t>(c.cb) - 128;
  const std::int64_t cr = static_cast<std::int64_t>(c.cr) - 128;
  return {clamp_u8(round_micro(y + 1402000 * cr)),
          clamp_u8(round_micro(y - 344136 * cb - 714136 * cr)),
          clamp_u8(round_micro(y + 1772000 * cb))};
}

PixelF bilinear_sample_f(const ImageU8& image, double x, double y, Rgb fill) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double tx = x - fx0;
  const double ty = y - fy0;
  // Far outside: every neighbor is fill.
  if (fx0 < -2.0 || fy0 < -2.0 || fx0 > image.width() + 1.0 || fy0 > image.height() + 1.0) {
    return {static_cast<double>(fill.r), static_cast<double>(fill.g),
            static_cast<double>(fill.b)};
  }
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  PixelF out;
  const auto add = [&](int px, int py, double w) {
    if (w == 0.0) return;
    const Rgb c = image.contains(px, py) ? image.at(px, py) : fill;
    out.r += w * c.r;
    out.g += w * c.g;
    out.b += w * c.b;
  };
  add(x0, y0, (1.0 - tx) * (1.0 - ty));
  add(x0 + 1, y0, tx * (1.0 - ty));
  add(x0, y0 + 1, (1.0 - tx) * ty);
  add(x0 + 1, y0 + 1, tx * ty);
  return out;
}

Rgb bilinear_sample(const ImageU8& image, double x, double y, Rgb fill) {
  return to_rgb(bilinear_sample_f(image, x, y, fill));
}

namespace {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) {
      throw PpmError(PpmErrorCode::kTruncated,
                     std::string("ppm: header ends before ") + field);
    }
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) {
        throw PpmError(PpmErrorCode::kBadHeader, std::string("ppm: ") + field + " too large");
      }
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      throw PpmError(PpmErrorCode::kBadHeader, std::string("ppm: expected integer ") + field);
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageU8 load_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw PpmError(PpmErrorCode::kBadMagic, "ppm: missing P6 magic");
  }
  PpmHeaderReader reader(bytes);
  reader.advance(2);
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const long maxval = reader.read_uint("maxval");
  if (width < 1 || height < 1) {
    throw PpmError(PpmErrorCode::kBadHeader, "ppm: zero image dimension");
  }
  if (maxval != 255) {
    throw PpmError(PpmErrorCode::kBadMaxval,
                   "ppm: maxval must be 255, got " + std::to_string(maxval));
  }
  // Exactly one whitespace byte separates maxval from the raster.
  if (reader.pos() >= bytes.size()) {
    throw PpmError(PpmErrorCode::kTruncated, "ppm: no raster data");
  }
  reader.advance(1);
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  const std::size_t have = bytes.size() - reader.pos();
  if (have < need) {
    throw PpmError(PpmErrorCode::kTruncated, "ppm: raster truncated, have " +
                                                 std::to_string(have) + " of " +
                                                 std::to_string(need) + " bytes");
  }
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos());
  std::vector<std::uint8_t> data(first, first + static_cast<std::ptrdiff_t>(need));
  return ImageU8(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

std::vector<std::uint8_t> save_ppm(const ImageU8& image) {
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto raster = image.bytes();
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

ImageU8 read_image_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return load_ppm(bytes);
  } catch (const PpmError& e) {
    throw PpmError(e.code(), path + ": " + e.what());
  }
}

void write_image_file(const std::string& path, const ImageU8& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path);
  const auto bytes = save_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace lca
