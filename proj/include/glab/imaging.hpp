#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

// Single-channel image with pixels clamped to [0, 1] on construction.
class GrayImage {
 public:
  GrayImage(std::size_t height, std::size_t width, std::vector<double> pixels);
  GrayImage(std::size_t height, std::size_t width, double fill = 0.0);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  double at(std::size_t r, std::size_t c) const { return pixels_[r * width_ + c]; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }
  double max() const;

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<double> pixels_;
};

struct EdgeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<char> mask;  // row-major, nonzero = edge

  bool at(std::size_t r, std::size_t c) const { return mask[r * width + c] != 0; }
  std::size_t count() const;
};

struct BaselinePoint {
  std::size_t row = 0;
  std::size_t col = 0;

  bool operator==(const BaselinePoint&) const = default;
};

// A baseline point and whether it is the image-centre fallback.
struct BaselineResult {
  BaselinePoint point;
  bool fallback = false;
};

// Gaussian blur (5x5, sigma 1) -> Sobel magnitude and direction -> non-maximum
// suppression over 4 direction bins -> double threshold -> 8-connected
// hysteresis. Borders replicate. A pixel is strong when its magnitude exceeds
// high, weak when it exceeds low. ContractError if low > high or low < 0.
EdgeMap canny(const GrayImage& image, double low, double high);

// Squared distance between two points.
double point_distance_sq(const BaselinePoint& a, const BaselinePoint& b);

// Coordinate pick from a gradient tensor viewed as a matrix (rank 1: one row;
// rank 2: as is; higher: leading axes are rows, the last two axes columns).
// Entries above min + 0.6 * (max - min) are listed row-major; the row comes
// from the entry at n/2, the column from the entry at 2n/3, and both are
// scaled proportionally to the image size.
BaselineResult baseline_from_gradients(const Tensor& gradient, std::size_t image_height,
                                       std::size_t image_width);

// Same pick over the edge pixels of an edge map, without scaling.
BaselineResult baseline_from_edges(const EdgeMap& edges);

// Peak 1. Returns +infinity for identical images. ContractError on size mismatch.
double psnr(const GrayImage& a, const GrayImage& b);
double psnr(const Tensor& a, const Tensor& b);
// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
// dynamic range 1, over all fully-contained window positions. Images smaller
// than 11 pixels shrink the window to the largest odd size that fits.
double ssim(const GrayImage& a, const GrayImage& b);
// Channel-averaged SSIM of [C, H, W] tensors.
double ssim(const Tensor& a, const Tensor& b);

// Anisotropic L1 total variation of [..., H, W], summed over leading axes.
double total_variation(const Tensor& image);
double total_variation(const GrayImage& image);

// [C, H, W] with C = 1 (clamped passthrough) or C = 3 (luminance).
GrayImage to_gray(const Tensor& image);
Tensor to_tensor(const GrayImage& image);

// Binary PGM (C = 1) or PPM (C = 3), maxval 255, values rounded to the nearest level.
void write_pnm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pnm(const std::filesystem::path& path);

}  // namespace glab
