#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "glab/errors.hpp"
#include "glab/imaging.hpp"
#include "reference_canny.hpp"

using namespace glab;

namespace {

GrayImage random_image(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(h * w);
  for (auto& v : px) v = u(rng);
  return GrayImage(h, w, std::move(px));
}

// Random rectangles on black: sparse, structured edges.
GrayImage blocks_image(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::vector<double> px(h * w, 0.0);
  std::uniform_int_distribution<std::size_t> pos(0, h - 1);
  std::uniform_real_distribution<double> level(0.2, 1.0);
  for (int k = 0; k < 3; ++k) {
    const std::size_t r0 = pos(rng), c0 = pos(rng), r1 = std::min(h, r0 + 4 + pos(rng) / 2),
                      c1 = std::min(w, c0 + 4 + pos(rng) / 2);
    const double v = level(rng);
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) px[r * w + c] = v;
    }
  }
  return GrayImage(h, w, std::move(px));
}

bool same_edges(const EdgeMap& a, const std::vector<char>& b) { return a.mask == b; }

}  // namespace

TEST_CASE("canny agrees with the reference pipeline") {
  std::mt19937_64 rng(2024);
  const double thresholds[][2] = {{0.1, 0.3}, {0.5, 1.0}, {1.0, 2.0}, {0.0, 0.0}};
  for (int i = 0; i < 50; ++i) {
    const GrayImage img = i % 2 ? random_image(rng, 32, 32) : blocks_image(rng, 32, 32);
    for (const auto& t : thresholds) {
      CAPTURE(i);
      CAPTURE(t[0]);
      CHECK(same_edges(canny(img, t[0], t[1]), reference::canny(img.pixels(), 32, 32, t[0], t[1])));
    }
  }
}

TEST_CASE("canny edge cases") {
  SUBCASE("constant image has no edges") {
    for (double v : {0.0, 0.37, 1.0}) CHECK(canny(GrayImage(32, 32, v), 0.1, 0.2).count() == 0);
  }

  SUBCASE("vertical step is a single column") {
    std::vector<double> px(32 * 32, 0.0);
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 16; c < 32; ++c) px[r * 32 + c] = 1.0;
    }
    const GrayImage img(32, 32, px);
    const EdgeMap e = canny(img, 0.1, 0.2);
    CHECK(e.count() == 32);
    for (std::size_t r = 0; r < 32; ++r) CHECK(e.at(r, 15));
    CHECK(same_edges(e, reference::canny(px, 32, 32, 0.1, 0.2)));
  }

  SUBCASE("thresholds are validated") {
    const GrayImage img(8, 8, 0.5);
    CHECK_THROWS_AS(canny(img, 0.3, 0.2), ContractError);
    CHECK_THROWS_AS(canny(img, -0.1, 0.2), ContractError);
    CHECK_THROWS_AS(canny(img, std::nan(""), 0.2), ContractError);
  }

  SUBCASE("tiny images") {
    CHECK(canny(GrayImage(1, 1, 0.5), 0.0, 0.1).count() == 0);
    const GrayImage img(2, 3, std::vector<double>{0, 1, 0, 1, 0, 1});
    CHECK(same_edges(canny(img, 0.0, 0.1), reference::canny(img.pixels(), 2, 3, 0.0, 0.1)));
  }
}

TEST_CASE("canny is invariant to power-of-two scaling of image and thresholds") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const GrayImage img = blocks_image(rng, 32, 32);
    const EdgeMap base = canny(img, 0.2, 0.6);
    for (double k : {0.5, 0.25}) {
      std::vector<double> px = img.pixels();
      for (auto& v : px) v *= k;
      CHECK(canny(GrayImage(32, 32, px), 0.2 * k, 0.6 * k).mask == base.mask);
    }
  }
}

TEST_CASE("baseline point from a gradient") {
  SUBCASE("single hot entry scales to the image") {
    Tensor g({7, 7}, 0.0);
    g[3 * 7 + 5] = 1.0;
    const auto r = baseline_from_gradients(g, 224, 224);
    CHECK(r.point == BaselinePoint{96, 160});
    CHECK_FALSE(r.fallback);
  }

  SUBCASE("row and column come from different entries") {
    // selected entries row-major: (0,1) (1,2) (2,0) (3,3); n = 4 -> L[2] for both
    Tensor g({4, 4}, 0.0);
    g[0 * 4 + 1] = 1.0;
    g[1 * 4 + 2] = 0.9;
    g[2 * 4 + 0] = 0.8;
    g[3 * 4 + 3] = 0.95;
    CHECK(baseline_from_gradients(g, 4, 4).point == BaselinePoint{2, 0});

    // five entries: row from L[2], column from L[3]
    g[3 * 4 + 1] = 0.7;
    CHECK(baseline_from_gradients(g, 4, 4).point == BaselinePoint{2, 1});
  }

  SUBCASE("threshold is 0.6 of the value range above the minimum") {
    // range [-1, 1]: keep entries above 0.2
    const Tensor g({1, 5}, std::vector<double>{-1.0, 0.1, 0.21, 1.0, 0.0});
    CHECK(baseline_from_gradients(g, 1, 5).point == BaselinePoint{0, 3});
  }

  SUBCASE("views of other ranks") {
    Tensor v({6}, 0.0);
    v[4] = 1.0;
    CHECK(baseline_from_gradients(v, 12, 12).point == BaselinePoint{0, 8});

    Tensor k({2, 3, 2, 2}, 0.0);  // viewed as 6 x 4
    k[(1 * 3 + 2) * 4 + 3] = 1.0;  // row 5, column 3
    CHECK(baseline_from_gradients(k, 12, 8).point == BaselinePoint{10, 6});
  }

  SUBCASE("constant gradient falls back to the centre") {
    const auto r = baseline_from_gradients(Tensor({4, 4}, 0.25), 32, 30);
    CHECK(r.fallback);
    CHECK(r.point == BaselinePoint{16, 15});
  }
}

TEST_CASE("baseline point from edges") {
  EdgeMap ring{8, 8, std::vector<char>(64, 0)};
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      if (r == 0 || c == 0 || r == 7 || c == 7) ring.mask[r * 8 + c] = 1;
    }
  }
  // 28 border pixels: L[14] = (4, 0), L[18] = (6, 0)
  const auto r = baseline_from_edges(ring);
  CHECK(r.point == BaselinePoint{4, 0});
  CHECK_FALSE(r.fallback);

  const auto empty = baseline_from_edges(EdgeMap{9, 6, std::vector<char>(54, 0)});
  CHECK(empty.fallback);
  CHECK(empty.point == BaselinePoint{4, 3});

  CHECK(point_distance_sq({1, 2}, {4, 6}) == 25.0);
}

TEST_CASE("psnr") {
  const GrayImage a(4, 4, 0.3);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK(psnr(GrayImage(4, 4, 0.0), GrayImage(4, 4, 0.1)) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(GrayImage(4, 4, 0.0), GrayImage(4, 4, 1.0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(psnr(a, GrayImage(4, 5, 0.3)), ContractError);

  std::mt19937_64 rng(1);
  const GrayImage x = random_image(rng, 16, 16), y = random_image(rng, 16, 16);
  CHECK(psnr(x, y) == psnr(y, x));

  // monotone noise ladder: larger perturbations, strictly lower psnr
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> direction(256);
  for (auto& v : direction) v = noise(rng);
  const GrayImage mid(16, 16, 0.5);
  double last = std::numeric_limits<double>::infinity();
  for (double sigma = 0.01; sigma < 0.15; sigma += 0.01) {
    std::vector<double> px(256);
    for (std::size_t i = 0; i < 256; ++i) px[i] = 0.5 + sigma * std::clamp(direction[i], -3.0, 3.0);
    const double p = psnr(mid, GrayImage(16, 16, px));
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("ssim") {
  std::mt19937_64 rng(3);
  const GrayImage x = random_image(rng, 32, 32), y = random_image(rng, 32, 32);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) < 0.5);
  CHECK(ssim(x, y) <= 1.0);
  std::vector<double> inv = x.pixels();
  for (auto& v : inv) v = 1.0 - v;
  const double anti = ssim(x, GrayImage(32, 32, inv));
  CHECK(anti >= -1.0);
  CHECK(anti < 0.0);

  // constant images: only the luminance term differs from one
  const double c1 = 1e-4, ma = 0.5, mb = 0.25;
  const double expected = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  CHECK(ssim(GrayImage(16, 16, ma), GrayImage(16, 16, mb)) == doctest::Approx(expected).epsilon(1e-12));
  // windows shrink for images below 11 pixels
  CHECK(ssim(GrayImage(5, 8, ma), GrayImage(5, 8, mb)) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(x, GrayImage(32, 31, 0.0)), ContractError);

  Tensor rgb({3, 12, 12}, 0.4);
  CHECK(ssim(rgb, rgb) == doctest::Approx(1.0));
}

TEST_CASE("total variation") {
  CHECK(total_variation(Tensor({2, 2}, std::vector<double>{0, 1, 1, 0})) == 4.0);
  CHECK(total_variation(Tensor({1, 3, 3}, 0.7)) == 0.0);
  // summed over channels
  Tensor two({2, 1, 3}, std::vector<double>{0, 1, 3, 0, 0, -2});
  CHECK(total_variation(two) == 3.0 + 2.0);
  CHECK_THROWS_AS(total_variation(Tensor({3}, 0.0)), ContractError);
}

TEST_CASE("baseline points stay inside the image") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const std::size_t gh = 1 + rng() % 9, gw = 1 + rng() % 9, h = 1 + rng() % 40, w = 1 + rng() % 40;
    Tensor g({gh, gw});
    for (auto& v : g.data()) v = static_cast<double>(rng() % 5);
    const auto r = baseline_from_gradients(g, h, w);
    CHECK(r.point.row < h);
    CHECK(r.point.col < w);
    const GrayImage img = random_image(rng, h, w);
    const auto e = baseline_from_edges(canny(img, 0.1, 0.3));
    CHECK(e.point.row < h);
    CHECK(e.point.col < w);
  }
}

TEST_CASE("gray conversion") {
  Tensor rgb({3, 1, 2}, std::vector<double>{1, 0, 0, 1, 0, 0});
  const GrayImage g = to_gray(rgb);
  // planes R = {1, 0}, G = {0, 1}, B = {0, 0}
  CHECK(g.at(0, 0) == doctest::Approx(0.299));
  CHECK(g.at(0, 1) == doctest::Approx(0.587));
  CHECK(to_gray(Tensor({1, 1, 2}, std::vector<double>{-0.5, 1.5})).pixels() == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(to_gray(Tensor({2, 2, 2}, 0.0)), ContractError);
  CHECK_THROWS_AS(GrayImage(1, 1, std::vector<double>{std::nan("")}), NumericError);
}

TEST_CASE("pnm round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "glab_test_imaging";
  std::filesystem::create_directories(dir);
  for (std::size_t channels : {1u, 3u}) {
    Tensor img({channels, 5, 7});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
    const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
    write_pnm(path, img);
    const Tensor back = read_pnm(path);
    CHECK(back.shape() == img.shape());
    CHECK(back.same_values(img));
  }
  // values between levels round to the nearest one
  Tensor img({1, 1, 2}, std::vector<double>{0.5, 2.0});
  write_pnm(dir / "b.pgm", img);
  const Tensor back = read_pnm(dir / "b.pgm");
  CHECK(back[0] == 128.0 / 255.0);
  CHECK(back[1] == 1.0);
}
