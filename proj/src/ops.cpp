#include "glab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glab/errors.hpp"
#include "glab/kernels.hpp"

namespace glab {

namespace {

Tape& tape_of(const Var& a, const Var& b, const char* op) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw ContractError(std::string(op) + ": operands live on different tapes");
  return t;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op, const char* what) {
  if (a.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

// Product of the axes after the channel axis.
std::size_t inner_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) n *= shape[i];
  return n;
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

kernels::ConvGeometry geometry(const Shape& input, const Shape& kernel, std::size_t stride,
                               std::size_t padding) {
  kernels::ConvGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_height = input[2];
  g.in_width = input[3];
  g.out_channels = kernel[0];
  g.kernel_height = kernel[2];
  g.kernel_width = kernel[3];
  g.stride = stride;
  g.padding = padding;
  return g;
}

void check_conv_shapes(const Shape& input, const Shape& kernel, std::size_t stride,
                       std::size_t padding, const char* op) {
  if (input.size() != 4) {
    throw DimensionError(std::string(op) + ": input must be [N, C, H, W], got " +
                         shape_string(input));
  }
  if (kernel.size() != 4) {
    throw DimensionError(std::string(op) + ": kernel must be [K, C, kH, kW], got " +
                         shape_string(kernel));
  }
  if (stride == 0) throw ContractError(std::string(op) + ": stride must be positive");
  if (input[1] != kernel[1]) {
    throw DimensionError(std::string(op) + ": channel axis mismatch, input axis 1 = " +
                         std::to_string(input[1]) + ", kernel axis 1 = " +
                         std::to_string(kernel[1]));
  }
  if (input[2] + 2 * padding < kernel[2]) {
    throw DimensionError(std::string(op) + ": height axis too small, input axis 2 = " +
                         std::to_string(input[2]) + " with padding " + std::to_string(padding) +
                         " < kernel axis 2 = " + std::to_string(kernel[2]));
  }
  if (input[3] + 2 * padding < kernel[3]) {
    throw DimensionError(std::string(op) + ": width axis too small, input axis 3 = " +
                         std::to_string(input[3]) + " with padding " + std::to_string(padding) +
                         " < kernel axis 3 = " + std::to_string(kernel[3]));
  }
}

Shape conv_output_shape(const Shape& input, const Shape& kernel, std::size_t stride,
                        std::size_t padding) {
  const auto g = geometry(input, kernel, stride, padding);
  return {input[0], kernel[0], g.out_height(), g.out_width()};
}

Var avgpool2d_backward(const Var& grad_out, const Shape& input_shape, std::size_t k);

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b, "add");
  require_same_shape(a, b, "add");
  return t.record(zip(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                  [](std::span<const Var>, const Var& g, std::span<const char> want) {
                    return std::vector<Var>{want[0] ? g : Var(), want[1] ? g : Var()};
                  },
                  "add");
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b, "sub");
  require_same_shape(a, b, "sub");
  return t.record(zip(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                  [](std::span<const Var>, const Var& g, std::span<const char> want) {
                    return std::vector<Var>{want[0] ? g : Var(), want[1] ? neg(g) : Var()};
                  },
                  "sub");
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b, "mul");
  require_same_shape(a, b, "mul");
  return t.record(zip(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                  [](std::span<const Var> in, const Var& g, std::span<const char> want) {
                    return std::vector<Var>{want[0] ? mul(g, in[1]) : Var(),
                                            want[1] ? mul(g, in[0]) : Var()};
                  },
                  "mul");
}

Var div(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b, "div");
  require_same_shape(a, b, "div");
  return t.record(zip(a.value(), b.value(), [](double x, double y) { return x / y; }), {a, b},
                  [](std::span<const Var> in, const Var& g, std::span<const char> want) {
                    Var ga, gb;
                    if (want[0]) ga = div(g, in[1]);
                    if (want[1]) gb = neg(div(mul(g, in[0]), mul(in[1], in[1])));
                    return std::vector<Var>{ga, gb};
                  },
                  "div");
}

Var neg(const Var& a) {
  return a.tape().record(map(a.value(), [](double x) { return -x; }), {a},
                         [](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{neg(g)};
                         },
                         "neg");
}

Var scale(const Var& a, double factor) {
  return a.tape().record(map(a.value(), [factor](double x) { return x * factor; }), {a},
                         [factor](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{scale(g, factor)};
                         },
                         "scale");
}

Var add_scalar(const Var& a, double c) {
  return a.tape().record(map(a.value(), [c](double x) { return x + c; }), {a},
                         [](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{g};
                         },
                         "add_scalar");
}

Var sqrt(const Var& a) {
  return a.tape().record(map(a.value(), [](double x) { return std::sqrt(x); }), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{div(g, scale(sqrt(in[0]), 2.0))};
                         },
                         "sqrt");
}

Var exp(const Var& a) {
  return a.tape().record(map(a.value(), [](double x) { return std::exp(x); }), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{mul(g, exp(in[0]))};
                         },
                         "exp");
}

Var log(const Var& a) {
  return a.tape().record(map(a.value(), [](double x) { return std::log(x); }), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{div(g, in[0])};
                         },
                         "log");
}

Var sigmoid(const Var& a) {
  return a.tape().record(map(a.value(), stable_sigmoid), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           const Var s = sigmoid(in[0]);
                           return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                         },
                         "sigmoid");
}

Var softplus(const Var& a) {
  return a.tape().record(map(a.value(), stable_softplus), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{mul(g, sigmoid(in[0]))};
                         },
                         "softplus");
}

Var relu(const Var& a) {
  return a.tape().record(map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           // the mask is piecewise constant in the input
                           Tensor mask = map(in[0].value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
                           return std::vector<Var>{mul(g, g.tape().constant(std::move(mask)))};
                         },
                         "relu");
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape().record(Tensor::scalar(acc), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{broadcast_scalar(g, in[0].shape())};
                         },
                         "sum");
}

Var broadcast_scalar(const Var& s, const Shape& shape) {
  if (s.size() != 1) {
    throw DimensionError("broadcast_scalar: source must have one element, got shape " +
                         shape_string(s.shape()));
  }
  return s.tape().record(Tensor(shape, s.value()[0]), {s},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{reshape(sum(g), in[0].shape())};
                         },
                         "broadcast_scalar");
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var sum_squares(const Var& a) { return sum(mul(a, a)); }

Var reshape(const Var& a, const Shape& shape) {
  if (shape == a.shape()) return a;
  return a.tape().record(a.value().reshaped(shape), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{reshape(g, in[0].shape())};
                         },
                         "reshape");
}

Var sum_rows(const Var& a) {
  require_rank(a, 2, "sum_rows", "operand");
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  Tensor out(Shape{C});
  const auto x = a.value().data();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) out[c] += x[r * C + c];
  }
  return a.tape().record(std::move(out), {a},
                         [R](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{broadcast_rows(g, R)};
                         },
                         "sum_rows");
}

Var broadcast_rows(const Var& v, std::size_t rows) {
  require_rank(v, 1, "broadcast_rows", "operand");
  const std::size_t C = v.shape()[0];
  Tensor out(Shape{rows, C});
  const auto x = v.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = x[c];
  }
  return v.tape().record(std::move(out), {v},
                         [](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{sum_rows(g)};
                         },
                         "broadcast_rows");
}

Var row_sum(const Var& a) {
  require_rank(a, 2, "row_sum", "operand");
  const std::size_t R = a.shape()[0], C = a.shape()[1];
  Tensor out(Shape{R});
  const auto x = a.value().data();
  for (std::size_t r = 0; r < R; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) acc += x[r * C + c];
    out[r] = acc;
  }
  return a.tape().record(std::move(out), {a},
                         [C](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{broadcast_cols(g, C)};
                         },
                         "row_sum");
}

Var broadcast_cols(const Var& v, std::size_t cols) {
  require_rank(v, 1, "broadcast_cols", "operand");
  const std::size_t R = v.shape()[0];
  Tensor out(Shape{R, cols});
  const auto x = v.value().data();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r];
  }
  return v.tape().record(std::move(out), {v},
                         [](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{row_sum(g)};
                         },
                         "broadcast_cols");
}

Var sum_channels(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) {
    throw DimensionError("sum_channels: operand needs a channel axis, got shape " + shape_string(s));
  }
  const std::size_t N = s[0], C = s[1], inner = inner_size(s);
  Tensor out(Shape{C});
  const auto x = a.value().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = x.data() + (n * C + c) * inner;
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      out[c] += acc;
    }
  }
  return a.tape().record(std::move(out), {a},
                         [](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{broadcast_channels(g, in[0].shape())};
                         },
                         "sum_channels");
}

Var broadcast_channels(const Var& v, const Shape& shape) {
  require_rank(v, 1, "broadcast_channels", "source");
  if (shape.size() < 2 || shape[1] != v.shape()[0]) {
    throw DimensionError("broadcast_channels: " + std::to_string(v.shape()[0]) +
                         " channels cannot broadcast to axis 1 of " + shape_string(shape));
  }
  const std::size_t N = shape[0], C = shape[1], inner = inner_size(shape);
  Tensor out(shape);
  const auto x = v.value().data();
  auto dst = out.data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      std::fill_n(dst.data() + (n * C + c) * inner, inner, x[c]);
    }
  }
  return v.tape().record(std::move(out), {v},
                         [](std::span<const Var>, const Var& g, std::span<const char>) {
                           return std::vector<Var>{sum_channels(g)};
                         },
                         "broadcast_channels");
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  Tape& t = tape_of(a, b, "matmul");
  require_rank(a, 2, "matmul", "left operand");
  require_rank(b, 2, "matmul", "right operand");
  const std::size_t m = transpose_a ? a.shape()[1] : a.shape()[0];
  const std::size_t k = transpose_a ? a.shape()[0] : a.shape()[1];
  const std::size_t kb = transpose_b ? b.shape()[1] : b.shape()[0];
  const std::size_t n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (k != kb) {
    throw DimensionError("matmul: inner axes differ, left " + shape_string(a.shape()) +
                         (transpose_a ? "^T" : "") + " vs right " + shape_string(b.shape()) +
                         (transpose_b ? "^T" : ""));
  }
  Tensor out(Shape{m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n, transpose_a,
                  transpose_b);
  return t.record(
      std::move(out), {a, b},
      [transpose_a, transpose_b](std::span<const Var> in, const Var& g, std::span<const char> want) {
        Var ga, gb;
        if (want[0]) {
          ga = transpose_a ? matmul(in[1], g, transpose_b, true) : matmul(g, in[1], false, !transpose_b);
        }
        if (want[1]) {
          gb = transpose_b ? matmul(g, in[0], true, transpose_a) : matmul(in[0], g, !transpose_a, false);
        }
        return std::vector<Var>{ga, gb};
      },
      "matmul");
}

// ---------------------------------------------------------------- layers

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  if (bias.shape()[0] != weight.shape()[0]) {
    throw DimensionError("linear: bias axis 0 = " + std::to_string(bias.shape()[0]) +
                         " but weight axis 0 = " + std::to_string(weight.shape()[0]));
  }
  return add(matmul(x, weight, false, true), broadcast_rows(bias, x.shape()[0]));
}

Var conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(input, kernel, "conv2d");
  check_conv_shapes(input.shape(), kernel.shape(), stride, padding, "conv2d");
  Tensor out(conv_output_shape(input.shape(), kernel.shape(), stride, padding));
  kernels::conv2d_forward(geometry(input.shape(), kernel.shape(), stride, padding),
                          input.value().data(), kernel.value().data(), out.data());
  return t.record(std::move(out), {input, kernel},
                  [stride, padding](std::span<const Var> in, const Var& g, std::span<const char> want) {
                    Var gx, gw;
                    if (want[0]) gx = conv2d_input_grad(g, in[1], in[0].shape(), stride, padding);
                    if (want[1]) gw = conv2d_weight_grad(in[0], g, in[1].shape(), stride, padding);
                    return std::vector<Var>{gx, gw};
                  },
                  "conv2d");
}

Var conv2d_input_grad(const Var& grad_out, const Var& kernel, const Shape& input_shape,
                      std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(grad_out, kernel, "conv2d_input_grad");
  check_conv_shapes(input_shape, kernel.shape(), stride, padding, "conv2d_input_grad");
  if (grad_out.shape() != conv_output_shape(input_shape, kernel.shape(), stride, padding)) {
    throw DimensionError("conv2d_input_grad: output gradient shape " +
                         shape_string(grad_out.shape()) + " does not match conv output");
  }
  Tensor out(input_shape);
  kernels::conv2d_input_grad(geometry(input_shape, kernel.shape(), stride, padding),
                             grad_out.value().data(), kernel.value().data(), out.data());
  return t.record(std::move(out), {grad_out, kernel},
                  [stride, padding](std::span<const Var> in, const Var& g, std::span<const char> want) {
                    Var g_gy, g_w;
                    if (want[0]) g_gy = conv2d(g, in[1], stride, padding);
                    if (want[1]) g_w = conv2d_weight_grad(g, in[0], in[1].shape(), stride, padding);
                    return std::vector<Var>{g_gy, g_w};
                  },
                  "conv2d_input_grad");
}

Var conv2d_weight_grad(const Var& input, const Var& grad_out, const Shape& kernel_shape,
                       std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(input, grad_out, "conv2d_weight_grad");
  check_conv_shapes(input.shape(), kernel_shape, stride, padding, "conv2d_weight_grad");
  if (grad_out.shape() != conv_output_shape(input.shape(), kernel_shape, stride, padding)) {
    throw DimensionError("conv2d_weight_grad: output gradient shape " +
                         shape_string(grad_out.shape()) + " does not match conv output");
  }
  Tensor out(kernel_shape);
  kernels::conv2d_weight_grad(geometry(input.shape(), kernel_shape, stride, padding),
                              input.value().data(), grad_out.value().data(), out.data());
  return t.record(std::move(out), {input, grad_out},
                  [stride, padding](std::span<const Var> in, const Var& g, std::span<const char> want) {
                    Var g_x, g_gy;
                    if (want[0]) g_x = conv2d_input_grad(in[1], g, in[0].shape(), stride, padding);
                    if (want[1]) g_gy = conv2d(in[0], g, stride, padding);
                    return std::vector<Var>{g_x, g_gy};
                  },
                  "conv2d_weight_grad");
}

namespace {

Var avgpool2d_backward(const Var& grad_out, const Shape& input_shape, std::size_t k) {
  const std::size_t planes = input_shape[0] * input_shape[1];
  Tensor out(input_shape);
  kernels::avgpool2d_backward(grad_out.value().data(), out.data(), planes, input_shape[2],
                              input_shape[3], k);
  return grad_out.tape().record(std::move(out), {grad_out},
                                [k](std::span<const Var>, const Var& g, std::span<const char>) {
                                  return std::vector<Var>{avgpool2d(g, k)};
                                },
                                "avgpool2d_backward");
}

}  // namespace

Var avgpool2d(const Var& x, std::size_t k) {
  require_rank(x, 4, "avgpool2d", "input");
  const Shape& s = x.shape();
  if (k == 0 || s[2] < k || s[3] < k) {
    throw DimensionError("avgpool2d: window " + std::to_string(k) + " does not fit spatial axes of " +
                         shape_string(s));
  }
  Tensor out(Shape{s[0], s[1], s[2] / k, s[3] / k});
  kernels::avgpool2d_forward(x.value().data(), out.data(), s[0] * s[1], s[2], s[3], k);
  return x.tape().record(std::move(out), {x},
                         [k](std::span<const Var> in, const Var& g, std::span<const char>) {
                           return std::vector<Var>{avgpool2d_backward(g, in[0].shape(), k)};
                         },
                         "avgpool2d");
}

Var batchnorm_inference(const Var& x, const Var& mean, const Var& var, const Var& gamma,
                        const Var& beta, double eps) {
  const Shape& s = x.shape();
  if (s.size() < 2) {
    throw DimensionError("batchnorm_inference: input needs a channel axis, got " + shape_string(s));
  }
  for (const Var* p : {&mean, &var, &gamma, &beta}) {
    if (p->shape() != Shape{s[1]}) {
      throw DimensionError("batchnorm_inference: statistics must have shape [" +
                           std::to_string(s[1]) + "], got " + shape_string(p->shape()));
    }
  }
  const Var factor = div(gamma, sqrt(add_scalar(var, eps)));
  const Var shift = sub(beta, mul(mean, factor));
  return add(mul(x, broadcast_channels(factor, s)), broadcast_channels(shift, s));
}

// ---------------------------------------------------------------- losses

Var logsumexp(const Var& logits) {
  const auto z = logits.value().data();
  const double m = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - m);
  return logits.tape().record(Tensor::scalar(m + std::log(acc)), {logits},
                              [](std::span<const Var> in, const Var& g, std::span<const char>) {
                                return std::vector<Var>{
                                    mul(broadcast_scalar(g, in[0].shape()), softmax(in[0]))};
                              },
                              "logsumexp");
}

Var softmax(const Var& logits) {
  const auto z = logits.value().data();
  const double m = *std::max_element(z.begin(), z.end());
  Tensor out(logits.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    acc += out[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) out[i] /= acc;
  return logits.tape().record(std::move(out), {logits},
                              [](std::span<const Var> in, const Var& g, std::span<const char>) {
                                const Var s = softmax(in[0]);
                                const Var inner = broadcast_scalar(dot(s, g), in[0].shape());
                                return std::vector<Var>{mul(s, sub(g, inner))};
                              },
                              "softmax");
}

Var cross_entropy(const Var& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " outside " +
                        std::to_string(logits.size()) + " classes");
  }
  Tensor onehot(logits.shape(), 0.0);
  onehot[label] = 1.0;
  return sub(logsumexp(logits), dot(logits, logits.tape().constant(std::move(onehot))));
}

Var multi_hot_bce(const Var& logits, std::span<const std::size_t> labels) {
  Tensor target(logits.shape(), 0.0);
  for (std::size_t label : labels) {
    if (label >= logits.size()) {
      throw ContractError("multi_hot_bce: label " + std::to_string(label) + " outside " +
                          std::to_string(logits.size()) + " classes");
    }
    target[label] = 1.0;
  }
  const Var y = logits.tape().constant(std::move(target));
  return scale(sub(sum(softplus(logits)), dot(logits, y)),
               1.0 / static_cast<double>(logits.size()));
}

Var cosine_similarity(const Var& a, const Var& b) {
  return cosine_similarity(std::span<const Var>(&a, 1), std::span<const Var>(&b, 1));
}

Var cosine_similarity(std::span<const Var> a, std::span<const Var> b) {
  if (a.empty() || a.size() != b.size()) {
    throw DimensionError("cosine_similarity: need equally many nonempty parts, got " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  Var num, na, nb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) {
      throw DimensionError("cosine_similarity: part " + std::to_string(i) + " sizes differ, " +
                           shape_string(a[i].shape()) + " vs " + shape_string(b[i].shape()));
    }
    const Var bi = b[i].shape() == a[i].shape() ? b[i] : reshape(b[i], a[i].shape());
    const Var d = dot(a[i], bi);
    const Var sa = sum_squares(a[i]);
    const Var sb = sum_squares(bi);
    num = num.valid() ? add(num, d) : d;
    na = na.valid() ? add(na, sa) : sa;
    nb = nb.valid() ? add(nb, sb) : sb;
  }
  if (!(na.item() > 0.0) || !(nb.item() > 0.0)) {
    throw DegenerateInputError("cosine_similarity: zero-norm argument");
  }
  return div(num, sqrt(mul(na, nb)));
}

Var total_variation(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) {
    throw DimensionError("total_variation: need at least [H, W], got " + shape_string(s));
  }
  const std::size_t H = s[s.size() - 2], W = s[s.size() - 1];
  const std::size_t planes = x.size() / (H * W);
  const auto v = x.value().data();
  double acc = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* q = v.data() + p * H * W;
    for (std::size_t i = 0; i + 1 < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) acc += std::abs(q[(i + 1) * W + j] - q[i * W + j]);
    }
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j + 1 < W; ++j) acc += std::abs(q[i * W + j + 1] - q[i * W + j]);
    }
  }
  return x.tape().record(
      Tensor::scalar(acc), {x},
      [H, W, planes](std::span<const Var> in, const Var& g, std::span<const char>) {
        const auto v = in[0].value().data();
        Tensor sub_grad(in[0].shape(), 0.0);
        auto d = sub_grad.data();
        auto sign = [](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); };
        for (std::size_t p = 0; p < planes; ++p) {
          const double* q = v.data() + p * H * W;
          double* o = d.data() + p * H * W;
          for (std::size_t i = 0; i + 1 < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
              const double sg = sign(q[(i + 1) * W + j] - q[i * W + j]);
              o[(i + 1) * W + j] += sg;
              o[i * W + j] -= sg;
            }
          }
          for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j + 1 < W; ++j) {
              const double sg = sign(q[i * W + j + 1] - q[i * W + j]);
              o[i * W + j + 1] += sg;
              o[i * W + j] -= sg;
            }
          }
        }
        return std::vector<Var>{
            mul(broadcast_scalar(g, in[0].shape()), g.tape().constant(std::move(sub_grad)))};
      },
      "total_variation");
}

}  // namespace glab
