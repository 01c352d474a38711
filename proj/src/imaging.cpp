#include "glab/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "glab/errors.hpp"

namespace glab {

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height_ == 0 || width_ == 0) throw DimensionError("GrayImage needs positive dimensions");
  if (pixels_.size() != height_ * width_) {
    throw DimensionError("GrayImage: " + std::to_string(pixels_.size()) + " pixels for " +
                         std::to_string(height_) + "x" + std::to_string(width_));
  }
  for (auto& p : pixels_) {
    if (!std::isfinite(p)) throw NumericError("GrayImage: non-finite pixel");
    p = std::clamp(p, 0.0, 1.0);
  }
}

GrayImage::GrayImage(std::size_t height, std::size_t width, double fill)
    : GrayImage(height, width, std::vector<double>(height * width, fill)) {}

double GrayImage::max() const { return *std::max_element(pixels_.begin(), pixels_.end()); }

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](char m) { return m != 0; }));
}

// ---- canny ----

namespace {

using Plane = std::vector<double>;

std::array<double, 25> gaussian5() {
  std::array<double, 25> k{};
  double total = 0.0;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const double v = std::exp(-(i * i + j * j) / 2.0);
      k[(i + 2) * 5 + (j + 2)] = v;
      total += v;
    }
  }
  for (auto& v : k) v /= total;
  return k;
}

std::size_t clamp_index(long i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
}

// Correlation with a square kernel of odd size, replicating the border.
Plane correlate(const Plane& src, std::size_t h, std::size_t w, const double* kernel, int size) {
  const int half = size / 2;
  Plane out(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = 0; a < size; ++a) {
        const std::size_t rr = clamp_index(static_cast<long>(r) + a - half, h);
        for (int b = 0; b < size; ++b) {
          const std::size_t cc = clamp_index(static_cast<long>(c) + b - half, w);
          acc += kernel[a * size + b] * src[rr * w + cc];
        }
      }
      out[r * w + c] = acc;
    }
  }
  return out;
}

constexpr double kSobelX[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
constexpr double kSobelY[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};

// Neighbour offsets (row, col) on the positive side of each direction bin.
constexpr int kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};

int direction_bin(double gx, double gy) {
  double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 180.0;
  if (deg < 22.5 || deg >= 157.5) return 0;
  if (deg < 67.5) return 1;
  if (deg < 112.5) return 2;
  return 3;
}

}  // namespace

EdgeMap canny(const GrayImage& image, double low, double high) {
  if (!(low >= 0.0) || !(low <= high)) {
    throw ContractError("canny: thresholds must satisfy 0 <= low <= high");
  }
  const std::size_t h = image.height(), w = image.width();
  static const auto gauss = gaussian5();
  const Plane blurred = correlate(image.pixels(), h, w, gauss.data(), 5);
  const Plane gx = correlate(blurred, h, w, kSobelX, 3);
  const Plane gy = correlate(blurred, h, w, kSobelY, 3);

  Plane mag(h * w);
  for (std::size_t i = 0; i < h * w; ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  auto mag_at = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return 0.0;
    return mag[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
  };

  // 0 = suppressed, 1 = weak, 2 = strong
  std::vector<char> level(h * w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      const double m = mag[i];
      if (!(m > low)) continue;
      const int bin = direction_bin(gx[i], gy[i]);
      const long rr = static_cast<long>(r), cc = static_cast<long>(c);
      const double ahead = mag_at(rr + kStep[bin][0], cc + kStep[bin][1]);
      const double behind = mag_at(rr - kStep[bin][0], cc - kStep[bin][1]);
      if (m > behind && m >= ahead) level[i] = m > high ? 2 : 1;
    }
  }

  EdgeMap edges{h, w, std::vector<char>(h * w, 0)};
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (level[i] == 2) {
      edges.mask[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const long r = static_cast<long>(i / w), c = static_cast<long>(i % w);
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        const long nr = r + dr, nc = c + dc;
        if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) || nc >= static_cast<long>(w)) continue;
        const std::size_t j = static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc);
        if (level[j] != 0 && !edges.mask[j]) {
          edges.mask[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return edges;
}

// ---- baseline points ----

double point_distance_sq(const BaselinePoint& a, const BaselinePoint& b) {
  const double dr = static_cast<double>(a.row) - static_cast<double>(b.row);
  const double dc = static_cast<double>(a.col) - static_cast<double>(b.col);
  return dr * dr + dc * dc;
}

namespace {

BaselineResult centre(std::size_t h, std::size_t w) { return {{h / 2, w / 2}, true}; }

// Row from the entry at n/2, column from the entry at 2n/3.
BaselinePoint pick(const std::vector<std::pair<std::size_t, std::size_t>>& coords) {
  const std::size_t n = coords.size();
  return {coords[n / 2].first, coords[2 * n / 3].second};
}

}  // namespace

BaselineResult baseline_from_gradients(const Tensor& gradient, std::size_t image_height,
                                       std::size_t image_width) {
  if (gradient.size() == 0) throw ContractError("baseline_from_gradients: empty gradient");
  if (image_height == 0 || image_width == 0) throw ContractError("baseline_from_gradients: empty image");
  const Shape& s = gradient.shape();
  std::size_t cols = 1;
  if (s.size() == 1) {
    cols = s[0];
  } else if (s.size() == 2) {
    cols = s[1];
  } else if (s.size() > 2) {
    cols = s[s.size() - 2] * s[s.size() - 1];
  }
  const std::size_t rows = gradient.size() / cols;

  const auto v = gradient.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double cutoff = *lo + 0.6 * (*hi - *lo);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > cutoff) coords.emplace_back(i / cols, i % cols);
  }
  if (coords.empty()) return centre(image_height, image_width);
  const BaselinePoint p = pick(coords);
  return {{p.row * image_height / rows, p.col * image_width / cols}, false};
}

BaselineResult baseline_from_edges(const EdgeMap& edges) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < edges.mask.size(); ++i) {
    if (edges.mask[i]) coords.emplace_back(i / edges.width, i % edges.width);
  }
  if (coords.empty()) return centre(edges.height, edges.width);
  return {pick(coords), false};
}

// ---- metrics ----

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": image shapes differ, " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

double ssim_plane(std::span<const double> x, std::span<const double> y, std::size_t h, std::size_t w) {
  std::size_t size = std::min<std::size_t>({11, h, w});
  if (size % 2 == 0) --size;
  const int half = static_cast<int>(size / 2);
  std::vector<double> k(size * size);
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    for (int j = -half; j <= half; ++j) {
      const double v = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
      k[(i + half) * size + (j + half)] = v;
      total += v;
    }
  }
  for (auto& v : k) v /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + size <= h; ++r) {
    for (std::size_t c = 0; c + size <= w; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (std::size_t a = 0; a < size; ++a) {
        for (std::size_t b = 0; b < size; ++b) {
          const double g = k[a * size + b];
          const double u = x[(r + a) * w + c + b], v = y[(r + a) * w + c + b];
          mx += g * u;
          my += g * v;
          xx += g * u * u;
          yy += g * v * v;
          xy += g * u * v;
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return acc / static_cast<double>(windows);
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const GrayImage& a, const GrayImage& b) { return psnr(to_tensor(a), to_tensor(b)); }

double ssim(const Tensor& a, const Tensor& b) {
  require_same(a, b, "ssim");
  if (a.rank() < 2) throw ContractError("ssim: need at least [H, W]");
  const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  const std::size_t planes = a.size() / (h * w);
  double acc = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    acc += ssim_plane(a.data().subspan(p * h * w, h * w), b.data().subspan(p * h * w, h * w), h, w);
  }
  return acc / static_cast<double>(planes);
}

double ssim(const GrayImage& a, const GrayImage& b) { return ssim(to_tensor(a), to_tensor(b)); }

double total_variation(const Tensor& image) {
  if (image.rank() < 2) throw ContractError("total_variation: need at least [H, W]");
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  const std::size_t planes = image.size() / (h * w);
  const auto x = image.data();
  double tv = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* q = x.data() + p * h * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        if (r + 1 < h) tv += std::abs(q[(r + 1) * w + c] - q[r * w + c]);
        if (c + 1 < w) tv += std::abs(q[r * w + c + 1] - q[r * w + c]);
      }
    }
  }
  return tv;
}

double total_variation(const GrayImage& image) { return total_variation(to_tensor(image)); }

GrayImage to_gray(const Tensor& image) {
  if (image.rank() != 3) throw ContractError("to_gray: expected [C, H, W], got " + shape_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> px(h * w);
  if (c == 1) {
    std::copy(image.data().begin(), image.data().end(), px.begin());
  } else if (c == 3) {
    for (std::size_t i = 0; i < h * w; ++i) {
      px[i] = 0.299 * image[i] + 0.587 * image[h * w + i] + 0.114 * image[2 * h * w + i];
    }
  } else {
    throw ContractError("to_gray: unsupported channel count " + std::to_string(c));
  }
  return GrayImage(h, w, std::move(px));
}

Tensor to_tensor(const GrayImage& image) {
  return Tensor({1, image.height(), image.width()}, image.pixels());
}

// ---- PNM ----

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ContractError("write_pnm: expected [1|3, H, W], got " + shape_string(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(c * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = std::clamp(image[ch * h * w + i], 0.0, 1.0);
      bytes[i * c + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    if (t.empty()) throw FormatError("truncated PNM header in " + path.string(), static_cast<std::uint64_t>(in.tellg()));
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw FormatError("not a binary PGM/PPM: " + path.string(), 0);
  const std::size_t w = std::stoul(token()), h = std::stoul(token()), maxval = std::stoul(token());
  if (maxval != 255 || w == 0 || h == 0) throw FormatError("unsupported PNM header in " + path.string(), 0);
  const std::size_t c = magic == "P5" ? 1 : 3;
  std::vector<unsigned char> bytes(c * h * w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError("truncated PNM pixel data in " + path.string(), static_cast<std::uint64_t>(in.gcount()));
  }
  Tensor out({c, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * h * w + i] = bytes[i * c + ch] / 255.0;
  }
  return out;
}

}  // namespace glab
