#include "glab/kernels.hpp"

#include <algorithm>

// Direct-loop convolutions: the straightforward definition, kept as the
// reference the im2col kernels are tested and benchmarked against.

namespace glab::kernels::reference {

namespace {

// Output index range [lo, hi) whose input coordinate i*s + offset - pad lies in [0, extent).
struct Range {
  std::size_t lo;
  std::size_t hi;
};

Range valid_range(std::size_t out_extent, std::size_t in_extent, std::size_t stride,
                  std::size_t offset, std::size_t pad) {
  // need i*s + offset >= pad and i*s + offset <= in_extent - 1 + pad
  std::size_t lo = 0;
  if (offset < pad) lo = (pad - offset + stride - 1) / stride;
  const std::size_t top = in_extent - 1 + pad;
  if (offset > top) return {0, 0};
  std::size_t hi = std::min(out_extent, (top - offset) / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<double> out) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t H = g.in_height, W = g.in_width, s = g.stride, p = g.padding;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t k = 0; k < g.out_channels; ++k) {
      double* o = out.data() + (n * g.out_channels + k) * oh * ow;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* xp = x.data() + (n * g.in_channels + c) * H * W;
        const double* wp = w.data() + (k * g.in_channels + c) * g.kernel_height * g.kernel_width;
        for (std::size_t a = 0; a < g.kernel_height; ++a) {
          const Range ri = valid_range(oh, H, s, a, p);
          for (std::size_t b = 0; b < g.kernel_width; ++b) {
            const Range rj = valid_range(ow, W, s, b, p);
            const double wv = wp[a * g.kernel_width + b];
            for (std::size_t i = ri.lo; i < ri.hi; ++i) {
              const double* xr = xp + (i * s + a - p) * W + (rj.lo * s + b - p);
              double* orow = o + i * ow + rj.lo;
              const std::size_t len = rj.hi - rj.lo;
              if (s == 1) {
                for (std::size_t j = 0; j < len; ++j) orow[j] += wv * xr[j];
              } else {
                for (std::size_t j = 0; j < len; ++j) orow[j] += wv * xr[j * s];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_input_grad(const ConvGeometry& g, std::span<const double> gy,
                       std::span<const double> w, std::span<double> gx) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t H = g.in_height, W = g.in_width, s = g.stride, p = g.padding;
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t k = 0; k < g.out_channels; ++k) {
      const double* go = gy.data() + (n * g.out_channels + k) * oh * ow;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        double* xp = gx.data() + (n * g.in_channels + c) * H * W;
        const double* wp = w.data() + (k * g.in_channels + c) * g.kernel_height * g.kernel_width;
        for (std::size_t a = 0; a < g.kernel_height; ++a) {
          const Range ri = valid_range(oh, H, s, a, p);
          for (std::size_t b = 0; b < g.kernel_width; ++b) {
            const Range rj = valid_range(ow, W, s, b, p);
            const double wv = wp[a * g.kernel_width + b];
            for (std::size_t i = ri.lo; i < ri.hi; ++i) {
              double* xr = xp + (i * s + a - p) * W + (rj.lo * s + b - p);
              const double* grow = go + i * ow + rj.lo;
              const std::size_t len = rj.hi - rj.lo;
              if (s == 1) {
                for (std::size_t j = 0; j < len; ++j) xr[j] += wv * grow[j];
              } else {
                for (std::size_t j = 0; j < len; ++j) xr[j * s] += wv * grow[j];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_weight_grad(const ConvGeometry& g, std::span<const double> x,
                        std::span<const double> gy, std::span<double> gw) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t H = g.in_height, W = g.in_width, s = g.stride, p = g.padding;
  std::fill(gw.begin(), gw.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t k = 0; k < g.out_channels; ++k) {
      const double* go = gy.data() + (n * g.out_channels + k) * oh * ow;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* xp = x.data() + (n * g.in_channels + c) * H * W;
        double* wp = gw.data() + (k * g.in_channels + c) * g.kernel_height * g.kernel_width;
        for (std::size_t a = 0; a < g.kernel_height; ++a) {
          const Range ri = valid_range(oh, H, s, a, p);
          for (std::size_t b = 0; b < g.kernel_width; ++b) {
            const Range rj = valid_range(ow, W, s, b, p);
            double acc = 0.0;
            for (std::size_t i = ri.lo; i < ri.hi; ++i) {
              const double* xr = xp + (i * s + a - p) * W + (rj.lo * s + b - p);
              const double* grow = go + i * ow + rj.lo;
              const std::size_t len = rj.hi - rj.lo;
              if (s == 1) {
                for (std::size_t j = 0; j < len; ++j) acc += xr[j] * grow[j];
              } else {
                for (std::size_t j = 0; j < len; ++j) acc += xr[j * s] * grow[j];
              }
            }
            wp[a * g.kernel_width + b] += acc;
          }
        }
      }
    }
  }
}

}  // namespace glab::kernels::reference
