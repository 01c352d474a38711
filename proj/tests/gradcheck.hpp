#pragma once

// Finite-difference oracle for the autodiff core. Only forward values are used
// to build the reference, so it is independent of every backward rule.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "glab/model.hpp"
#include "glab/ops.hpp"
#include "glab/tape.hpp"

namespace glab::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(std::max(na, nb)), 1e-12);
  return std::sqrt(diff) / scale;
}

inline double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).item();
}

inline std::vector<double> numeric_gradient(const ScalarFn& f, std::vector<Tensor> inputs,
                                            std::size_t which, double h = 1e-5) {
  std::vector<double> g(inputs[which].size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = inputs[which][i];
    inputs[which][i] = orig + h;
    const double up = evaluate(f, inputs);
    inputs[which][i] = orig - h;
    const double down = evaluate(f, inputs);
    inputs[which][i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<std::vector<double>> analytic_gradient(const ScalarFn& f,
                                                          const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (auto t : inputs) {
    t.set_requires_grad(true);
    vars.push_back(tape.leaf(std::move(t)));
  }
  tape.backward(f(tape, vars));
  std::vector<std::vector<double>> out;
  for (const auto& v : vars) {
    const auto& g = tape.leaf_tensor(v).grad();
    out.push_back(g ? *g : std::vector<double>(v.size(), 0.0));
  }
  return out;
}

// Largest relative error between backward() and central differences over all inputs.
inline double gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  const auto analytic = analytic_gradient(f, inputs);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto numeric = numeric_gradient(f, inputs, k, h);
    worst = std::max(worst, relative_error(analytic[k], numeric));
  }
  return worst;
}

// Second-order check: differentiates q(x) = <grad f(x), v> (built with
// create_graph) and compares against central differences of q.
inline double gradgradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs,
                            std::uint64_t seed, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> directions;
  for (const auto& t : inputs) {
    Tensor d(t.shape());
    for (auto& v : d.data()) v = normal(rng);
    directions.push_back(std::move(d));
  }
  const ScalarFn q = [&](Tape& tape, const std::vector<Var>& xs) {
    std::vector<Var> leaves;
    // rebind as differentiable leaves when evaluated on a constant tape
    for (const auto& x : xs) {
      if (tape.needs_grad(x)) {
        leaves.push_back(x);
      } else {
        Tensor t = x.value();
        t.set_requires_grad(true);
        leaves.push_back(tape.leaf(std::move(t)));
      }
    }
    const Var y = f(tape, leaves);
    const auto grads = tape.grad(y, leaves, true);
    Var acc;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Var d = dot(grads[i], tape.constant(directions[i]));
      acc = acc.valid() ? add(acc, d) : d;
    }
    return acc;
  };
  return gradcheck(q, inputs, h);
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Scalarizes a tensor-valued op with a fixed random projection.
inline Var project(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dot(y, y.tape().constant(random_tensor(rng, y.shape())));
}

struct PrimitiveCase {
  std::string name;
  ScalarFn fn;
  std::vector<Tensor> inputs;
  bool smooth = true;  // false: kinks make second-order FD meaningless
};

// One randomized instance of every primitive, shapes and hyperparameters drawn from rng.
inline std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> small(1, 4);
  std::uniform_int_distribution<std::size_t> stride_pick(1, 2);
  std::uniform_int_distribution<std::size_t> pad_pick(0, 1);
  const std::uint64_t pseed = rng();
  std::vector<PrimitiveCase> cases;
  const Shape s{small(rng), small(rng) + 1};

  cases.push_back({"add", [pseed](Tape&, const std::vector<Var>& x) { return project(add(x[0], x[1]), pseed); },
                   {random_tensor(rng, s), random_tensor(rng, s)}});
  cases.push_back({"sub", [pseed](Tape&, const std::vector<Var>& x) { return project(sub(x[0], x[1]), pseed); },
                   {random_tensor(rng, s), random_tensor(rng, s)}});
  cases.push_back({"mul", [pseed](Tape&, const std::vector<Var>& x) { return project(mul(x[0], x[1]), pseed); },
                   {random_tensor(rng, s), random_tensor(rng, s)}});
  cases.push_back({"div", [pseed](Tape&, const std::vector<Var>& x) { return project(div(x[0], x[1]), pseed); },
                   {random_tensor(rng, s), random_tensor(rng, s, 0.5, 2.0)}});
  cases.push_back({"exp", [pseed](Tape&, const std::vector<Var>& x) { return project(exp(x[0]), pseed); },
                   {random_tensor(rng, s)}});
  cases.push_back({"log", [pseed](Tape&, const std::vector<Var>& x) { return project(log(x[0]), pseed); },
                   {random_tensor(rng, s, 0.5, 2.0)}});
  cases.push_back({"sqrt", [pseed](Tape&, const std::vector<Var>& x) { return project(sqrt(x[0]), pseed); },
                   {random_tensor(rng, s, 0.5, 2.0)}});
  cases.push_back({"sigmoid", [pseed](Tape&, const std::vector<Var>& x) { return project(sigmoid(x[0]), pseed); },
                   {random_tensor(rng, s, -3.0, 3.0)}});
  cases.push_back({"softplus", [pseed](Tape&, const std::vector<Var>& x) { return project(softplus(x[0]), pseed); },
                   {random_tensor(rng, s, -3.0, 3.0)}});
  cases.push_back({"relu", [pseed](Tape&, const std::vector<Var>& x) { return project(relu(x[0]), pseed); },
                   {random_tensor(rng, s)}, false});
  cases.push_back({"scale_add_scalar",
                   [pseed](Tape&, const std::vector<Var>& x) { return project(add_scalar(scale(x[0], -1.5), 0.25), pseed); },
                   {random_tensor(rng, s)}});
  cases.push_back({"reshape_rows",
                   [pseed](Tape&, const std::vector<Var>& x) {
                     const Var r = reshape(x[0], {x[0].shape()[1], x[0].shape()[0]});
                     return project(broadcast_rows(sum_rows(r), 3), pseed);
                   },
                   {random_tensor(rng, s)}});
  cases.push_back({"row_sum_cols",
                   [pseed](Tape&, const std::vector<Var>& x) { return project(broadcast_cols(row_sum(x[0]), 2), pseed); },
                   {random_tensor(rng, s)}});
  {
    const bool ta = stride_pick(rng) == 2, tb = stride_pick(rng) == 2;
    const std::size_t m = small(rng), k = small(rng), n = small(rng);
    cases.push_back({std::string("matmul") + (ta ? "_ta" : "") + (tb ? "_tb" : ""),
                     [pseed, ta, tb](Tape&, const std::vector<Var>& x) { return project(matmul(x[0], x[1], ta, tb), pseed); },
                     {random_tensor(rng, ta ? Shape{k, m} : Shape{m, k}),
                      random_tensor(rng, tb ? Shape{n, k} : Shape{k, n})}});
  }
  {
    const std::size_t n = small(rng), in = small(rng) + 1, out = small(rng);
    cases.push_back({"linear",
                     [pseed](Tape&, const std::vector<Var>& x) { return project(linear(x[0], x[1], x[2]), pseed); },
                     {random_tensor(rng, {n, in}), random_tensor(rng, {out, in}), random_tensor(rng, {out})}});
  }
  {
    const std::size_t stride = stride_pick(rng), pad = pad_pick(rng);
    const std::size_t C = small(rng), K = small(rng), H = 4 + small(rng), W = 4 + small(rng);
    const std::size_t kh = 1 + 2 * pad_pick(rng), kw = 1 + 2 * pad_pick(rng);
    const Shape xs{1 + pad_pick(rng), C, H, W}, ks{K, C, kh, kw};
    cases.push_back({"conv2d",
                     [pseed, stride, pad](Tape&, const std::vector<Var>& x) { return project(conv2d(x[0], x[1], stride, pad), pseed); },
                     {random_tensor(rng, xs), random_tensor(rng, ks)}});
    Tape probe;
    const Shape ys = conv2d(probe.constant(Tensor(xs)), probe.constant(Tensor(ks)), stride, pad).shape();
    cases.push_back({"conv2d_input_grad",
                     [pseed, stride, pad, xs](Tape&, const std::vector<Var>& x) {
                       return project(conv2d_input_grad(x[0], x[1], xs, stride, pad), pseed);
                     },
                     {random_tensor(rng, ys), random_tensor(rng, ks)}});
    cases.push_back({"conv2d_weight_grad",
                     [pseed, stride, pad, ks](Tape&, const std::vector<Var>& x) {
                       return project(conv2d_weight_grad(x[0], x[1], ks, stride, pad), pseed);
                     },
                     {random_tensor(rng, xs), random_tensor(rng, ys)}});
  }
  {
    const std::size_t k = stride_pick(rng);
    const Shape xs{1, small(rng), 2 * small(rng) + 1, 2 * small(rng)};
    cases.push_back({"avgpool2d",
                     [pseed, k](Tape&, const std::vector<Var>& x) { return project(avgpool2d(x[0], k), pseed); },
                     {random_tensor(rng, xs)}});
  }
  {
    const std::size_t C = small(rng);
    const Shape xs{small(rng), C, 2, 3};
    cases.push_back({"batchnorm_inference",
                     [pseed](Tape&, const std::vector<Var>& x) {
                       return project(batchnorm_inference(x[0], x[1], x[2], x[3], x[4]), pseed);
                     },
                     {random_tensor(rng, xs), random_tensor(rng, {C}), random_tensor(rng, {C}, 0.5, 2.0),
                      random_tensor(rng, {C}), random_tensor(rng, {C})}});
  }
  {
    const std::size_t K = 2 + small(rng);
    std::uniform_int_distribution<std::size_t> lab(0, K - 1);
    const std::size_t label = lab(rng), other = lab(rng);
    cases.push_back({"logsumexp", [](Tape&, const std::vector<Var>& x) { return logsumexp(x[0]); },
                     {random_tensor(rng, {K}, -3.0, 3.0)}});
    cases.push_back({"softmax", [pseed](Tape&, const std::vector<Var>& x) { return project(softmax(x[0]), pseed); },
                     {random_tensor(rng, {K}, -3.0, 3.0)}});
    cases.push_back({"cross_entropy", [label](Tape&, const std::vector<Var>& x) { return cross_entropy(x[0], label); },
                     {random_tensor(rng, {1, K}, -3.0, 3.0)}});
    cases.push_back({"multi_hot_bce",
                     [label, other](Tape&, const std::vector<Var>& x) {
                       const std::size_t labels[] = {label, other};
                       return multi_hot_bce(x[0], labels);
                     },
                     {random_tensor(rng, {K}, -3.0, 3.0)}});
  }
  {
    const Shape a{small(rng), 3}, b{2, small(rng)};
    cases.push_back({"cosine_similarity",
                     [](Tape&, const std::vector<Var>& x) {
                       const Var xa[] = {x[0], x[1]};
                       const Var xb[] = {x[2], x[3]};
                       return cosine_similarity(std::span<const Var>(xa), std::span<const Var>(xb));
                     },
                     {random_tensor(rng, a), random_tensor(rng, b), random_tensor(rng, a), random_tensor(rng, b)}});
  }
  cases.push_back({"total_variation", [](Tape&, const std::vector<Var>& x) { return total_variation(x[0]); },
                   {random_tensor(rng, {small(rng), 3 + small(rng), 3 + small(rng)})}, false});
  return cases;
}

// Classification loss of a seeded MicroCNN as a function of (image, params...).
// Alternates cross entropy and multi-hot BCE; 16x16 inputs keep the
// finite-difference sweep over every parameter cheap.
struct ModelLossCase {
  ScalarFn fn;
  std::vector<Tensor> inputs;
};

// Smallest |input| over the network's ReLUs at `image` ([C, H, W]).
inline double relu_margin(const ModelGraph& model, const Tensor& image) {
  Tape tape;
  std::vector<Var> p;
  for (const auto& q : model.params()) p.push_back(tape.constant(q.value));
  Shape batched{1};
  batched.insert(batched.end(), image.shape().begin(), image.shape().end());
  Var h = tape.constant(image.reshaped(batched));
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& l : model.layers()) {
    switch (l.kind) {
      case LayerKind::conv:
        h = conv2d(h, p[l.params[0]], l.stride, l.padding);
        h = add(h, broadcast_channels(p[l.params[1]], h.shape()));
        break;
      case LayerKind::relu:
        for (double v : h.value().values()) margin = std::min(margin, std::abs(v));
        h = relu(h);
        break;
      case LayerKind::avgpool:
        h = avgpool2d(h, l.window);
        break;
      case LayerKind::linear:
        return margin;
    }
  }
  return margin;
}

inline ModelLossCase micro_cnn_loss_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t channels = seed % 3 == 2 ? 3 : 1;
  const std::size_t classes = 3 + seed % 4;
  auto model = std::make_shared<ModelGraph>(build_micro_cnn({channels, 16, 16}, classes, seed));
  const LossKind kind = seed % 2 ? LossKind::multi_hot_bce : LossKind::cross_entropy;
  std::vector<std::size_t> labels = {static_cast<std::size_t>(rng() % classes)};
  if (kind == LossKind::multi_hot_bce && labels[0] + 1 < classes) labels.push_back(labels[0] + 1);
  ModelLossCase c;
  // A step of 1e-5 moves no ReLU input across zero when the smallest one is
  // 1e-4 away, so central differences see a smooth function.
  Tensor image = random_tensor(rng, {channels, 16, 16}, 0.0, 1.0);
  while (relu_margin(*model, image) < 1e-4) image = random_tensor(rng, {channels, 16, 16}, 0.0, 1.0);
  c.inputs.push_back(image);
  for (const auto& p : model->params()) c.inputs.push_back(p.value);
  c.fn = [model, labels, kind](Tape&, const std::vector<Var>& x) {
    const std::vector<Var> params(x.begin() + 1, x.end());
    return classification_loss(model->forward(x[0], params), labels, kind);
  };
  return c;
}

}  // namespace glab::testing
