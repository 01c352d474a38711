#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the differentiable ops. Serial loops over
// caller-owned buffers, no shape validation. Convolutions go through a
// per-thread im2col scratch buffer.

namespace glab::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_height = 1;
  std::size_t in_width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_height = 1;
  std::size_t kernel_width = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (in_height + 2 * padding - kernel_height) / stride + 1; }
  std::size_t out_width() const { return (in_width + 2 * padding - kernel_width) / stride + 1; }
};

// out[n,k,i,j] = sum_{c,a,b} w[k,c,a,b] * x[n,c,i*s+a-p, j*s+b-p]   (cross-correlation)
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<double> out);

// gx[n,c,u,v] = sum w[k,c,a,b] * gy[n,k,i,j] over (u,v) = (i*s+a-p, j*s+b-p)
void conv2d_input_grad(const ConvGeometry& g, std::span<const double> gy,
                       std::span<const double> w, std::span<double> gx);

// gw[k,c,a,b] = sum_{n,i,j} x[n,c,i*s+a-p, j*s+b-p] * gy[n,k,i,j]
void conv2d_weight_grad(const ConvGeometry& g, std::span<const double> x,
                        std::span<const double> gy, std::span<double> gw);

// c = op(a) * op(b) with op = transpose when the flag is set. a is stored
// [m,k] (or [k,m] when transposed), b is [k,n] (or [n,k]); c is [m,n].
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_a, bool transpose_b);

// Non-overlapping k x k average pooling over the trailing two axes of
// [planes, h, w]; trailing rows/columns that do not fill a window are dropped.
void avgpool2d_forward(std::span<const double> x, std::span<double> out, std::size_t planes,
                       std::size_t h, std::size_t w, std::size_t k);
void avgpool2d_backward(std::span<const double> gy, std::span<double> gx, std::size_t planes,
                        std::size_t h, std::size_t w, std::size_t k);

// Direct-loop versions of the three convolution kernels, same contracts.
namespace reference {
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<double> out);
void conv2d_input_grad(const ConvGeometry& g, std::span<const double> gy,
                       std::span<const double> w, std::span<double> gx);
void conv2d_weight_grad(const ConvGeometry& g, std::span<const double> x,
                        std::span<const double> gy, std::span<double> gw);
}  // namespace reference

}  // namespace glab::kernels
