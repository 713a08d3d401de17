#include <doctest.h>

#include <cmath>
#include <string>

#include "lca/error.hpp"
#include "lca/image.hpp"
#include "test_util.hpp"

using namespace lca;
using lca::testing::random_image;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

// Straight floating-point reading of the BT.601 definition, used as an oracle.
int ref_round(double v) { return std::clamp(static_cast<int>(std::floor(v + 0.5)), 0, 255); }

}  // namespace

TEST_CASE("ImageU8 construction and validation") {
  ImageU8 img(3, 2, Rgb{1, 2, 3});
  CHECK(img.bytes().size() == 18);
  CHECK(img.at(2, 1) == Rgb{1, 2, 3});
  img.set(0, 1, {9, 8, 7});
  CHECK(img.at(0, 1) == Rgb{9, 8, 7});
  CHECK_THROWS_AS(ImageU8(0, 5), ValidationError);
  CHECK_THROWS_AS(ImageU8(2, 2, std::vector<std::uint8_t>(11)), ValidationError);
}

TEST_CASE("to_u8 rounds half up and clamps") {
  CHECK(to_u8(0.5) == 1);
  CHECK(to_u8(0.49) == 0);
  CHECK(to_u8(127.5) == 128);
  CHECK(to_u8(-3.0) == 0);
  CHECK(to_u8(300.0) == 255);
  CHECK(to_u8(254.5) == 255);
  CHECK(to_u8(std::nan("")) == 0);
}

TEST_CASE("luminance") {
  CHECK(luminance(255, 255, 255) == 255);
  CHECK(luminance(0, 0, 0) == 0);
  CHECK(luminance(200, 0, 0) == 60);
  // exhaustive agreement with the real-valued definition on a lattice, away from exact halves
  for (int r = 0; r < 256; r += 5) {
    for (int g = 0; g < 256; g += 7) {
      for (int b = 0; b < 256; b += 11) {
        const double exact = 0.299 * r + 0.587 * g + 0.114 * b;
        if (std::abs(exact - std::floor(exact) - 0.5) < 1e-6) continue;
        CHECK(luminance(r, g, b) == ref_round(exact));
      }
    }
  }
}

TEST_CASE("YCbCr conversion") {
  CHECK(rgb_to_ycbcr({0, 0, 0}) == YCbCr{0, 128, 128});
  CHECK(rgb_to_ycbcr({255, 255, 255}) == YCbCr{255, 128, 128});
  SUBCASE("round trip within 1 on a 17^3 lattice") {
    int worst = 0;
    for (int r = 0; r <= 256; r += 16) {
      for (int g = 0; g <= 256; g += 16) {
        for (int b = 0; b <= 256; b += 16) {
          const Rgb in{static_cast<std::uint8_t>(std::min(r, 255)), static_cast<std::uint8_t>(std::min(g, 255)),
                       static_cast<std::uint8_t>(std::min(b, 255))};
          const Rgb out = ycbcr_to_rgb(rgb_to_ycbcr(in));
          worst = std::max({worst, std::abs(in.r - out.r), std::abs(in.g - out.g), std::abs(in.b - out.b)});
        }
      }
    }
    CHECK(worst <= 1);
  }
  SUBCASE("forward transform matches the real-valued formula") {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
      const int r = static_cast<int>(rng.index(256));
      const int g = static_cast<int>(rng.index(256));
      const int b = static_cast<int>(rng.index(256));
      const YCbCr c = rgb_to_ycbcr({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                    static_cast<std::uint8_t>(b)});
      if ((299 * r + 587 * g + 114 * b) % 1000 != 500) {
        CHECK(c.y == ref_round(0.299 * r + 0.587 * g + 0.114 * b));
      }
      CHECK(std::abs(c.cb - ref_round(128 - 0.168736 * r - 0.331264 * g + 0.5 * b)) <= 1);
      CHECK(std::abs(c.cr - ref_round(128 + 0.5 * r - 0.418688 * g - 0.081312 * b)) <= 1);
    }
  }
}

TEST_CASE("bilinear_sample") {
  Rng rng(11);
  const ImageU8 img = random_image(5, 4, rng);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) CHECK(bilinear_sample(img, x, y, kGray) == img.at(x, y));
  }
  CHECK(bilinear_sample(img, -50.0, 3.0, {1, 2, 3}) == Rgb{1, 2, 3});
  CHECK(bilinear_sample(img, 2.0, 1e9, {1, 2, 3}) == Rgb{1, 2, 3});

  ImageU8 two(2, 1);
  two.set(1, 0, {100, 0, 0});
  CHECK(bilinear_sample(two, 0.5, 0.0, kGray) == Rgb{50, 0, 0});
  // half a pixel past the right edge mixes in the fill
  CHECK(bilinear_sample(two, 1.5, 0.0, {0, 0, 0}) == Rgb{50, 0, 0});
  // continuity: small steps give small changes away from the fill boundary
  const PixelF a = bilinear_sample_f(img, 1.3, 2.2, kGray);
  const PixelF b = bilinear_sample_f(img, 1.3 + 1e-7, 2.2, kGray);
  CHECK(std::abs(a.r - b.r) < 1e-4);
}

TEST_CASE("PPM decoding") {
  std::string one = "P6 1 1 255\n";
  one += std::string{10, 20, 30};
  const ImageU8 img = load_ppm(bytes_of(one));
  CHECK(img.width() == 1);
  CHECK(img.at(0, 0) == Rgb{10, 20, 30});

  std::string commented = "P6\n# made by hand\n1 # width\n1\n255\n";
  commented += std::string{10, 20, 30};
  CHECK(load_ppm(bytes_of(commented)) == img);

  auto code_of = [](const std::string& s) {
    try {
      load_ppm(bytes_of(s));
    } catch (const PpmError& e) {
      return static_cast<int>(e.code());
    }
    return -1;
  };
  CHECK(code_of("P6 2 2 255\n" + std::string(9, 'x')) == static_cast<int>(PpmErrorCode::kTruncated));
  CHECK(code_of("P3 1 1 255\n" + std::string(3, 'x')) == static_cast<int>(PpmErrorCode::kBadMagic));
  CHECK(code_of("P6 1 1 65535\n" + std::string(6, 'x')) == static_cast<int>(PpmErrorCode::kBadMaxval));
  CHECK(code_of("P6 1 x 255\n") == static_cast<int>(PpmErrorCode::kBadHeader));
  CHECK(code_of("") == static_cast<int>(PpmErrorCode::kBadMagic));
}

TEST_CASE("PPM encoding") {
  const auto bytes = save_ppm(ImageU8(1, 1));
  // "P6\n1 1\n255\n" is 11 header bytes, plus 3 payload bytes
  CHECK(bytes.size() == 14);
  CHECK(std::string(bytes.begin(), bytes.begin() + 11) == "P6\n1 1\n255\n");

  Rng rng(5);
  const ImageU8 img = random_image(8, 8, rng);
  const auto first = save_ppm(img);
  const ImageU8 back = load_ppm(first);
  CHECK(back == img);
  CHECK(save_ppm(back) == first);
}

TEST_CASE("image file round trip") {
  lca::testing::TempDir dir("image");
  Rng rng(9);
  const ImageU8 img = random_image(7, 3, rng);
  write_image_file((dir / "a.ppm").string(), img);
  CHECK(read_image_file((dir / "a.ppm").string()) == img);
  CHECK_THROWS_AS(read_image_file((dir / "missing.ppm").string()), IoError);
}
