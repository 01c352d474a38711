#include "glab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "glab/errors.hpp"
#include "glab/ops.hpp"
#include "glab/optim.hpp"

namespace glab {

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::cross_entropy ? "cross_entropy" : "multi_hot_bce";
}

Var classification_loss(const Var& logits, std::span<const std::size_t> labels, LossKind kind) {
  if (labels.empty()) throw ContractError("classification_loss: empty label set");
  if (kind == LossKind::multi_hot_bce) return multi_hot_bce(logits, labels);
  Var total = cross_entropy(logits, labels[0]);
  for (std::size_t i = 1; i < labels.size(); ++i) total = add(total, cross_entropy(logits, labels[i]));
  return total;
}

// ---- ModelGraph ----

ModelGraph::ModelGraph(Shape input_shape, std::size_t class_count)
    : input_shape_(std::move(input_shape)), class_count_(class_count), shape_(input_shape_) {
  if (input_shape_.size() != 3 || shape_size(input_shape_) == 0) {
    throw ConfigError("model input shape must be [C, H, W], got " + shape_string(input_shape_));
  }
  if (class_count_ == 0) throw ConfigError("class_count must be positive");
}

void ModelGraph::check_new_name(const std::string& name) const {
  for (const auto& l : layers_) {
    if (l.name == name) throw ConfigError("duplicate layer name \"" + name + "\"");
  }
}

std::size_t ModelGraph::add_param(const std::string& name, Tensor value) {
  value.set_requires_grad(false);
  params_.push_back({name, std::move(value)});
  return params_.size() - 1;
}

void ModelGraph::add_conv(const std::string& name, Tensor weight, Tensor bias, std::size_t stride,
                          std::size_t padding) {
  check_new_name(name);
  if (shape_.size() != 3) throw DimensionError(name + ": convolution after flatten");
  if (weight.rank() != 4 || weight.dim(1) != shape_[0]) {
    throw DimensionError(name + ": kernel " + shape_string(weight.shape()) +
                         " does not match activation " + shape_string(shape_));
  }
  if (bias.shape() != Shape{weight.dim(0)}) throw DimensionError(name + ": bias shape");
  if (stride == 0) throw ConfigError(name + ": stride must be positive");
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  if (shape_[1] + 2 * padding < kh || shape_[2] + 2 * padding < kw) {
    throw ConfigError(name + ": kernel larger than padded input " + shape_string(shape_));
  }
  Layer l;
  l.name = name;
  l.kind = LayerKind::conv;
  l.stride = stride;
  l.padding = padding;
  shape_ = {weight.dim(0), (shape_[1] + 2 * padding - kh) / stride + 1,
            (shape_[2] + 2 * padding - kw) / stride + 1};
  l.params = {add_param(name + ".weight", std::move(weight)), add_param(name + ".bias", std::move(bias))};
  layers_.push_back(std::move(l));
}

void ModelGraph::add_relu(const std::string& name) {
  check_new_name(name);
  Layer l;
  l.name = name;
  l.kind = LayerKind::relu;
  layers_.push_back(std::move(l));
}

void ModelGraph::add_avgpool(const std::string& name, std::size_t window) {
  check_new_name(name);
  if (shape_.size() != 3) throw DimensionError(name + ": pooling after flatten");
  if (window == 0 || shape_[1] < window || shape_[2] < window) {
    throw ConfigError(name + ": pooling window " + std::to_string(window) +
                      " does not fit activation " + shape_string(shape_));
  }
  Layer l;
  l.name = name;
  l.kind = LayerKind::avgpool;
  l.window = window;
  shape_ = {shape_[0], shape_[1] / window, shape_[2] / window};
  layers_.push_back(std::move(l));
}

void ModelGraph::add_linear(const std::string& name, Tensor weight, Tensor bias) {
  check_new_name(name);
  const std::size_t in = shape_size(shape_);
  if (weight.rank() != 2 || weight.dim(1) != in) {
    throw DimensionError(name + ": weight " + shape_string(weight.shape()) + " does not accept " +
                         std::to_string(in) + " features");
  }
  if (bias.shape() != Shape{weight.dim(0)}) throw DimensionError(name + ": bias shape");
  Layer l;
  l.name = name;
  l.kind = LayerKind::linear;
  shape_ = {weight.dim(0)};
  l.params = {add_param(name + ".weight", std::move(weight)), add_param(name + ".bias", std::move(bias))};
  layers_.push_back(std::move(l));
}

Shape ModelGraph::activation_shape() const { return shape_; }

std::size_t ModelGraph::head_weight_index() const {
  if (layers_.empty() || layers_.back().kind != LayerKind::linear) {
    throw ConfigError("model does not end in a fully-connected layer");
  }
  return layers_.back().params[0];
}

std::size_t ModelGraph::head_bias_index() const {
  head_weight_index();
  return layers_.back().params[1];
}

std::size_t ModelGraph::feature_count() const { return params_[head_weight_index()].value.dim(1); }

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Var> ModelGraph::bind(Tape& tape, bool differentiable) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) {
    Tensor t = p.value;
    t.set_requires_grad(differentiable);
    vars.push_back(tape.leaf(std::move(t)));
  }
  return vars;
}

Var ModelGraph::forward(const Var& input, std::span<const Var> params) const {
  if (params.size() != params_.size()) throw ContractError("forward: wrong number of parameters");
  if (shape_ != Shape{class_count_}) {
    throw ConfigError("model is incomplete: final layer must be fully-connected with " +
                      std::to_string(class_count_) + " outputs");
  }
  Var h = input;
  if (h.shape() == input_shape_) {
    Shape batched{1};
    batched.insert(batched.end(), input_shape_.begin(), input_shape_.end());
    h = reshape(h, batched);
  }
  if (h.shape().size() != 4 || Shape(h.shape().begin() + 1, h.shape().end()) != input_shape_) {
    throw DimensionError("model expects input [N, " + shape_string(input_shape_) + "], got " +
                         shape_string(h.shape()));
  }
  const std::size_t n = h.shape()[0];
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::conv: {
        const Var& w = params[l.params[0]];
        const Var& b = params[l.params[1]];
        h = conv2d(h, w, l.stride, l.padding);
        h = add(h, broadcast_channels(b, h.shape()));
        break;
      }
      case LayerKind::relu:
        h = relu(h);
        break;
      case LayerKind::avgpool:
        h = avgpool2d(h, l.window);
        break;
      case LayerKind::linear:
        if (h.shape().size() != 2) h = reshape(h, {n, h.size() / n});
        h = linear(h, params[l.params[0]], params[l.params[1]]);
        break;
    }
  }
  return h;
}

std::vector<double> ModelGraph::logits(const Tensor& image) const {
  Tape tape;
  const auto params = bind(tape, false);
  return forward(tape.constant(image), params).value().values();
}

namespace {

constexpr const char* kHeaderEntry = "model.header";
constexpr const char* kLayerPrefix = "layer.";

}  // namespace

std::vector<NamedTensor> ModelGraph::to_entries() const {
  std::vector<NamedTensor> out;
  out.push_back({kHeaderEntry,
                 Tensor({5}, {static_cast<double>(input_shape_[0]), static_cast<double>(input_shape_[1]),
                              static_cast<double>(input_shape_[2]), static_cast<double>(class_count_),
                              trained_ ? 1.0 : 0.0})});
  for (const auto& l : layers_) {
    out.push_back({kLayerPrefix + l.name,
                   Tensor({4}, {static_cast<double>(l.kind), static_cast<double>(l.stride),
                                static_cast<double>(l.padding), static_cast<double>(l.window)})});
  }
  for (const auto& p : params_) out.push_back(p);
  return out;
}

ModelGraph ModelGraph::from_entries(const std::vector<NamedTensor>& entries) {
  auto as_count = [](double v, const std::string& what) {
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) throw FormatError("bad " + what + " field", 0);
    return static_cast<std::size_t>(v);
  };
  if (entries.empty() || entries[0].name != kHeaderEntry || entries[0].value.size() != 5) {
    throw FormatError("missing model header entry", 0);
  }
  const auto& h = entries[0].value;
  ModelGraph model({as_count(h[0], "channels"), as_count(h[1], "height"), as_count(h[2], "width")},
                   as_count(h[3], "class count"));
  std::size_t next = 1;
  std::vector<std::pair<std::string, std::vector<double>>> layers;
  while (next < entries.size() && entries[next].name.rfind(kLayerPrefix, 0) == 0) {
    layers.emplace_back(entries[next].name.substr(std::string(kLayerPrefix).size()),
                        entries[next].value.values());
    ++next;
  }
  auto take = [&](const std::string& name) {
    if (next >= entries.size() || entries[next].name != name) {
      throw FormatError("expected parameter entry \"" + name + "\"", 0);
    }
    return entries[next++].value;
  };
  for (const auto& [name, d] : layers) {
    if (d.size() != 4) throw FormatError("bad layer descriptor for " + name, 0);
    switch (static_cast<LayerKind>(as_count(d[0], "layer kind"))) {
      case LayerKind::conv: {
        Tensor w = take(name + ".weight");
        Tensor b = take(name + ".bias");
        model.add_conv(name, std::move(w), std::move(b), as_count(d[1], "stride"), as_count(d[2], "padding"));
        break;
      }
      case LayerKind::relu:
        model.add_relu(name);
        break;
      case LayerKind::avgpool:
        model.add_avgpool(name, as_count(d[3], "window"));
        break;
      case LayerKind::linear: {
        Tensor w = take(name + ".weight");
        Tensor b = take(name + ".bias");
        model.add_linear(name, std::move(w), std::move(b));
        break;
      }
      default:
        throw FormatError("unknown layer kind for " + name, 0);
    }
  }
  if (next != entries.size()) throw FormatError("unexpected entry \"" + entries[next].name + "\"", 0);
  model.head_weight_index();
  if (model.shape_ != Shape{model.class_count_}) throw FormatError("head size differs from class count", 0);
  model.trained_ = h[4] != 0.0;
  return model;
}

std::uint64_t ModelGraph::fingerprint() const { return glab::fingerprint(to_entries()); }

namespace {

Tensor uniform(std::mt19937_64& rng, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

ModelGraph build_micro_cnn(const Shape& input_shape, std::size_t class_count, std::uint64_t seed,
                           const MicroCnnOptions& options) {
  if (input_shape.size() != 3) throw ConfigError("input shape must be [C, H, W]");
  if (input_shape[1] < 16 || input_shape[2] < 16) {
    throw ConfigError("MicroCNN needs height and width >= 16, got " + shape_string(input_shape));
  }
  std::mt19937_64 rng(seed);
  ModelGraph m(input_shape, class_count);
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t stride) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    Tensor w = uniform(rng, {out, in, 3, 3}, bound);
    Tensor b = uniform(rng, {out}, bound);
    m.add_conv(name, std::move(w), std::move(b), stride, 1);
  };
  conv("conv1", input_shape[0], options.channels1, options.stride1);
  m.add_relu("relu1");
  conv("conv2", options.channels1, options.channels2, options.stride2);
  m.add_relu("relu2");
  conv("conv3", options.channels2, options.channels3, options.stride3);
  m.add_relu("relu3");
  m.add_avgpool("pool", options.pool);
  const std::size_t f = shape_size(m.activation_shape());
  const double fc_bound = 1.0 / std::sqrt(static_cast<double>(f));
  Tensor w = uniform(rng, {class_count, f}, fc_bound);
  Tensor b = uniform(rng, {class_count}, fc_bound);
  m.add_linear("fc", std::move(w), std::move(b));
  return m;
}

ModelGraph build_linear_model(const Shape& input_shape, std::size_t class_count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelGraph m(input_shape, class_count);
  const std::size_t in = shape_size(input_shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w = uniform(rng, {class_count, in}, bound);
  Tensor b = uniform(rng, {class_count}, bound);
  m.add_linear("fc", std::move(w), std::move(b));
  return m;
}

// ---- training ----

namespace {

std::vector<std::size_t> predicted_set(const std::vector<double>& logits, LabelMode mode) {
  std::vector<std::size_t> out;
  if (mode == LabelMode::single) {
    out.push_back(static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
  } else {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      if (logits[k] > 0.0) out.push_back(k);
    }
  }
  return out;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

double accuracy(const ModelGraph& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predicted_set(model.logits(data.images[i]), data.mode) == sorted(data.label_sets[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(ModelGraph& model, const Dataset& data, const TrainOptions& options) {
  if (data.size() == 0) throw ContractError("train: empty dataset");
  if (data.class_count != model.class_count()) throw ContractError("train: class count mismatch");
  if (options.batch_size == 0) throw ContractError("train: batch size must be positive");
  const LossKind kind = data.mode == LabelMode::single ? LossKind::cross_entropy : LossKind::multi_hot_bce;
  auto& params = model.mutable_params();
  std::vector<Adam> optimizers;
  for (const auto& p : params) optimizers.emplace_back(p.value.size(), AdamOptions{.lr = options.lr});
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<std::vector<double>> grads(params.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      for (std::size_t p = 0; p < params.size(); ++p) grads[p].assign(params[p].value.size(), 0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t i = order[s];
        Tape tape;
        const auto vars = model.bind(tape, true);
        Var loss;
        try {
          loss = classification_loss(model.forward(tape.constant(data.images[i]), vars),
                                     data.label_sets[i], kind);
        } catch (const NumericError& e) {
          throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }
        epoch_loss += loss.item();
        const auto g = tape.grad(loss, vars, false);
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto gv = g[p].value().data();
          for (std::size_t j = 0; j < gv.size(); ++j) grads[p][j] += gv[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (auto& v : grads[p]) v *= inv;
        optimizers[p].step(params[p].value.data(), grads[p]);
      }
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch));
    }
    for (const auto& p : params) {
      try {
        p.value.check_finite(p.name);
      } catch (const NumericError&) {
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + " (" + p.name + ")");
      }
    }
    result.loss_trace.push_back(epoch_loss);
  }
  model.set_trained(true);
  result.accuracy = accuracy(model, data);
  return result;
}

void save_weights(const ModelGraph& model, const std::filesystem::path& path) {
  write_container(path, "MGIC", model.to_entries());
}

ModelGraph load_weights(const std::filesystem::path& path) {
  return ModelGraph::from_entries(read_container(path, "MGIC"));
}

// ---- NCB ----

namespace {

enum NcbParam : std::size_t { kLinW, kLinB, kMean, kVar, kGamma, kBeta, kFcW, kFcB };

}  // namespace

NCBGraph::NCBGraph(std::size_t class_count, std::size_t feature_count, std::size_t hidden)
    : class_count_(class_count), feature_count_(feature_count), hidden_(hidden == 0 ? feature_count : hidden) {
  const std::size_t f = feature_count, h = hidden_;
  Tensor eye({h, f});
  for (std::size_t i = 0; i < std::min(h, f); ++i) eye[i * f + i] = 1.0;
  params_ = {{"ncb.linear.weight", eye},
             {"ncb.linear.bias", Tensor({h}, 0.0)},
             {"ncb.bn.mean", Tensor({h}, 0.0)},
             {"ncb.bn.var", Tensor({h}, 1.0)},
             {"ncb.bn.gamma", Tensor({h}, 1.0)},
             {"ncb.bn.beta", Tensor({h}, 0.0)},
             {"ncb.fc.weight", Tensor({class_count, h}, 0.0)},
             {"ncb.fc.bias", Tensor({class_count}, 0.0)}};
}

Var NCBGraph::forward(const Var& input, std::span<const Var> p) const {
  const std::size_t k = class_count_, f = feature_count_;
  const std::size_t rows = input.size() / f;
  if (input.size() % (k * f) != 0 || input.shape().empty() || input.shape()[0] != rows) {
    throw DimensionError("NCB expects input [N*" + std::to_string(k) + ", " + std::to_string(f) +
                         ", 1, 1], got " + shape_string(input.shape()));
  }
  const std::size_t n = rows / k, hd = hidden_;
  Var h = linear(reshape(input, {rows, f}), p[kLinW], p[kLinB]);
  h = avgpool2d(reshape(h, {rows, hd, 1, 1}), 1);
  h = batchnorm_inference(h, p[kMean], p[kVar], p[kGamma], p[kBeta]);
  // Row r of sample i is scored by head row r.
  const Var w = broadcast_rows(reshape(p[kFcW], {k * hd}), n);
  h = mul(reshape(h, {n, k * hd}), w);
  const Var scores = row_sum(reshape(h, {rows, hd}));
  return add(scores, reshape(broadcast_rows(p[kFcB], n), {rows}));
}

std::vector<double> NCBGraph::scores(const Tensor& input) const {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& q : params_) vars.push_back(tape.constant(q.value));
  const Var x = tape.constant(input.reshaped(input_shape()));
  return sigmoid(forward(x, vars)).value().values();
}

std::uint64_t NCBGraph::checksum() const { return glab::fingerprint(params_); }

namespace {

// Per-feature mean and variance of the linear stage output over all rows.
void refresh_statistics(NCBGraph& ncb, const Tensor& stacked) {
  auto& p = ncb.mutable_params();
  const std::size_t in = ncb.feature_count(), f = ncb.hidden();
  Tape tape;
  const Var h = linear(tape.constant(stacked.reshaped({stacked.size() / in, in})),
                       tape.constant(p[kLinW].value), tape.constant(p[kLinB].value));
  const auto v = h.value().data();
  const std::size_t rows = v.size() / f;
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) mean[j] += v[r * f + j];
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) var[j] += (v[r * f + j] - mean[j]) * (v[r * f + j] - mean[j]);
  for (std::size_t j = 0; j < f; ++j) {
    p[kMean].value[j] = mean[j];
    p[kVar].value[j] = var[j] / static_cast<double>(rows);
  }
}

}  // namespace

NCBGraph build_ncb(const ModelGraph& model, NcbMode mode, std::span<const NcbExample> corpus,
                   const NcbTrainOptions& options) {
  const std::size_t k = model.class_count(), f = model.feature_count();
  NCBGraph ncb(k, f, mode == NcbMode::copy_weights ? f : options.hidden);
  auto& p = ncb.mutable_params();
  if (mode == NcbMode::copy_weights) {
    if (!model.trained()) throw ConfigError("NCB copy mode needs a trained model");
    p[kFcW].value = model.params()[model.head_weight_index()].value;
    p[kFcB].value = model.params()[model.head_bias_index()].value;
    return ncb;
  }
  if (corpus.empty()) throw ConfigError("NCB training needs a gradient corpus");

  Tensor stacked({corpus.size() * k, f, 1, 1});
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& g = corpus[i].head_gradient;
    if (g.size() != k * f) {
      throw DimensionError("NCB corpus entry has " + shape_string(g.shape()) + ", expected [" +
                           std::to_string(k) + ", " + std::to_string(f) + "]");
    }
    for (std::size_t j = 0; j < k * f; ++j) stacked[i * k * f + j] = g[j] * options.input_scale;
    for (std::size_t label : corpus[i].labels) {
      if (label >= k) throw ContractError("NCB corpus label out of range");
      targets.push_back(i * k + label);
    }
  }
  std::sort(targets.begin(), targets.end());

  std::mt19937_64 rng(options.seed);
  const std::size_t hd = ncb.hidden();
  // a full-width linear stage starts as the identity, a narrower one at random
  if (hd != f) p[kLinW].value = uniform(rng, {hd, f}, 1.0 / std::sqrt(static_cast<double>(f)));
  p[kFcW].value = uniform(rng, {k, hd}, 1.0 / std::sqrt(static_cast<double>(hd)));

  const std::vector<std::size_t> trainable = {kLinW, kLinB, kGamma, kBeta, kFcW, kFcB};
  std::vector<Adam> optimizers;
  for (std::size_t i : trainable) optimizers.emplace_back(p[i].value.size(), AdamOptions{.lr = options.lr});
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.corpus_statistics) refresh_statistics(ncb, stacked);
    Tape tape;
    std::vector<Var> vars;
    std::vector<Var> wrt;
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor t = p[i].value;
      const bool train_it = std::find(trainable.begin(), trainable.end(), i) != trainable.end();
      t.set_requires_grad(train_it);
      vars.push_back(tape.leaf(std::move(t)));
      if (train_it) wrt.push_back(vars.back());
    }
    Var loss;
    try {
      loss = multi_hot_bce(ncb.forward(tape.constant(stacked), vars), targets);
    } catch (const NumericError& e) {
      throw NumericError("NCB training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    const auto g = tape.grad(loss, wrt, false);
    for (std::size_t j = 0; j < trainable.size(); ++j) {
      optimizers[j].step(p[trainable[j]].value.data(), g[j].value().data());
    }
  }
  if (options.corpus_statistics) refresh_statistics(ncb, stacked);
  return ncb;
}

void save_ncb(const NCBGraph& ncb, const std::filesystem::path& path) {
  std::vector<NamedTensor> entries;
  entries.push_back({"ncb.header", Tensor({3}, {static_cast<double>(ncb.class_count()),
                                                static_cast<double>(ncb.feature_count()),
                                                static_cast<double>(ncb.hidden())})});
  entries.insert(entries.end(), ncb.params().begin(), ncb.params().end());
  write_container(path, "MGIC", entries);
}

NCBGraph load_ncb(const std::filesystem::path& path) {
  const auto entries = read_container(path, "MGIC");
  if (entries.empty() || entries[0].name != "ncb.header" || entries[0].value.size() != 3) {
    throw FormatError("missing NCB header entry in " + path.string(), 0);
  }
  const double k = entries[0].value[0], f = entries[0].value[1], hd = entries[0].value[2];
  for (double v : {k, f, hd}) {
    if (!(v >= 1 && v <= 1e9) || v != std::floor(v)) throw FormatError("bad NCB header in " + path.string(), 0);
  }
  NCBGraph ncb(static_cast<std::size_t>(k), static_cast<std::size_t>(f), static_cast<std::size_t>(hd));
  auto& params = ncb.mutable_params();
  if (entries.size() != params.size() + 1) throw FormatError("wrong NCB entry count in " + path.string(), 0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i + 1];
    if (e.name != params[i].name || e.value.shape() != params[i].value.shape()) {
      throw FormatError("unexpected NCB entry \"" + e.name + "\" in " + path.string(), 0);
    }
    params[i].value = e.value;
  }
  return ncb;
}

}  // namespace glab
