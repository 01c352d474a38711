#include "glab/kernels.hpp"

#include <algorithm>
#include <vector>

namespace glab::kernels {

namespace {

// Patch matrix of sample n: col[(c*kh + a)*kw + b][i*ow + j] = x[n, c, i*s+a-p, j*s+b-p], zero outside.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t H = g.in_height, W = g.in_width, s = g.stride;
  const long p = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* xp = x + c * H * W;
    for (std::size_t a = 0; a < g.kernel_height; ++a) {
      for (std::size_t b = 0; b < g.kernel_width; ++b) {
        double* row = col + ((c * g.kernel_height + a) * g.kernel_width + b) * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          const long u = static_cast<long>(i * s + a) - p;
          double* dst = row + i * ow;
          if (u < 0 || u >= static_cast<long>(H)) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = xp + static_cast<std::size_t>(u) * W;
          for (std::size_t j = 0; j < ow; ++j) {
            const long v = static_cast<long>(j * s + b) - p;
            dst[j] = v < 0 || v >= static_cast<long>(W) ? 0.0 : src[v];
          }
        }
      }
    }
  }
}

// Adds the patch matrix back onto the image it was gathered from.
void col2im(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t H = g.in_height, W = g.in_width, s = g.stride;
  const long p = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* xp = x + c * H * W;
    for (std::size_t a = 0; a < g.kernel_height; ++a) {
      for (std::size_t b = 0; b < g.kernel_width; ++b) {
        const double* row = col + ((c * g.kernel_height + a) * g.kernel_width + b) * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          const long u = static_cast<long>(i * s + a) - p;
          if (u < 0 || u >= static_cast<long>(H)) continue;
          double* dst = xp + static_cast<std::size_t>(u) * W;
          const double* src = row + i * ow;
          for (std::size_t j = 0; j < ow; ++j) {
            const long v = static_cast<long>(j * s + b) - p;
            if (v >= 0 && v < static_cast<long>(W)) dst[v] += src[j];
          }
        }
      }
    }
  }
}

// Per-thread scratch for patch matrices; restarts on different threads never share it.
double* scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

std::size_t patch_rows(const ConvGeometry& g) { return g.in_channels * g.kernel_height * g.kernel_width; }

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<double> out) {
  const std::size_t P = g.out_height() * g.out_width(), Q = patch_rows(g), K = g.out_channels;
  double* col = scratch(Q * P);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * g.in_channels * g.in_height * g.in_width, col);
    double* o = out.data() + n * K * P;
    for (std::size_t k = 0; k < K; ++k) {
      double* orow = o + k * P;
      const double* wk = w.data() + k * Q;
      std::size_t q = 0;
      // four patch rows per pass halves the traffic on orow
      for (; q + 4 <= Q; q += 4) {
        const double w0 = wk[q], w1 = wk[q + 1], w2 = wk[q + 2], w3 = wk[q + 3];
        const double *c0 = col + q * P, *c1 = c0 + P, *c2 = c1 + P, *c3 = c2 + P;
        for (std::size_t j = 0; j < P; ++j) orow[j] += (w0 * c0[j] + w1 * c1[j]) + (w2 * c2[j] + w3 * c3[j]);
      }
      for (; q < Q; ++q) {
        const double wv = wk[q];
        const double* c = col + q * P;
        for (std::size_t j = 0; j < P; ++j) orow[j] += wv * c[j];
      }
    }
  }
}

void conv2d_input_grad(const ConvGeometry& g, std::span<const double> gy,
                       std::span<const double> w, std::span<double> gx) {
  const std::size_t P = g.out_height() * g.out_width(), Q = patch_rows(g), K = g.out_channels;
  double* col = scratch(Q * P);
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    std::fill(col, col + Q * P, 0.0);
    const double* go = gy.data() + n * K * P;
    for (std::size_t q = 0; q < Q; ++q) {
      double* c = col + q * P;
      std::size_t k = 0;
      for (; k + 4 <= K; k += 4) {
        const double w0 = w[k * Q + q], w1 = w[(k + 1) * Q + q], w2 = w[(k + 2) * Q + q], w3 = w[(k + 3) * Q + q];
        const double *g0 = go + k * P, *g1 = g0 + P, *g2 = g1 + P, *g3 = g2 + P;
        for (std::size_t j = 0; j < P; ++j) c[j] += (w0 * g0[j] + w1 * g1[j]) + (w2 * g2[j] + w3 * g3[j]);
      }
      for (; k < K; ++k) {
        const double wv = w[k * Q + q];
        const double* g0 = go + k * P;
        for (std::size_t j = 0; j < P; ++j) c[j] += wv * g0[j];
      }
    }
    col2im(g, col, gx.data() + n * g.in_channels * g.in_height * g.in_width);
  }
}

void conv2d_weight_grad(const ConvGeometry& g, std::span<const double> x,
                        std::span<const double> gy, std::span<double> gw) {
  const std::size_t P = g.out_height() * g.out_width(), Q = patch_rows(g), K = g.out_channels;
  double* col = scratch(Q * P);
  std::fill(gw.begin(), gw.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * g.in_channels * g.in_height * g.in_width, col);
    const double* go = gy.data() + n * K * P;
    for (std::size_t k = 0; k < K; ++k) {
      const double* grow = go + k * P;
      for (std::size_t q = 0; q < Q; ++q) {
        const double* c = col + q * P;
        // four partial sums let the loop vectorize without reassociation flags
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t j = 0;
        for (; j + 4 <= P; j += 4) {
          for (std::size_t t = 0; t < 4; ++t) acc[t] += grow[j + t] * c[j + t];
        }
        for (; j < P; ++j) acc[0] += grow[j] * c[j];
        gw[k * Q + q] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
      }
    }
  }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool transpose_a, bool transpose_b) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = transpose_a ? a[t * m + i] : a[i * k + t];
      if (av == 0.0) continue;
      if (!transpose_b) {
        const double* brow = b.data() + t * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + t];
      }
    }
  }
}

void avgpool2d_forward(std::span<const double> x, std::span<double> out, std::size_t planes,
                       std::size_t h, std::size_t w, std::size_t k) {
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* xp = x.data() + pl * h * w;
    double* op = out.data() + pl * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) acc += xp[(i * k + a) * w + j * k + b];
        }
        op[i * ow + j] = acc * inv;
      }
    }
  }
}

void avgpool2d_backward(std::span<const double> gy, std::span<double> gx, std::size_t planes,
                        std::size_t h, std::size_t w, std::size_t k) {
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* gp = gy.data() + pl * oh * ow;
    double* xp = gx.data() + pl * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double v = gp[i * ow + j] * inv;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) xp[(i * k + a) * w + j * k + b] = v;
        }
      }
    }
  }
}

}  // namespace glab::kernels
