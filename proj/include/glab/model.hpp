#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "glab/container.hpp"
#include "glab/dataset.hpp"
#include "glab/tape.hpp"

namespace glab {

enum class LossKind { cross_entropy, multi_hot_bce };

const char* loss_kind_name(LossKind kind);

// Training loss of one sample. For cross_entropy with several labels the
// per-label losses are summed.
Var classification_loss(const Var& logits, std::span<const std::size_t> labels, LossKind kind);

enum class LayerKind { conv, relu, avgpool, linear };

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 1;            // avgpool only
  std::vector<std::size_t> params;   // indices into ModelGraph::params()
};

// Ordered sequence of named layers ending in a fully-connected head.
// Parameters are named "<layer>.weight" / "<layer>.bias".
class ModelGraph {
 public:
  // input_shape is [C, H, W].
  ModelGraph(Shape input_shape, std::size_t class_count);

  void add_conv(const std::string& name, Tensor weight, Tensor bias, std::size_t stride,
                std::size_t padding);
  void add_relu(const std::string& name);
  void add_avgpool(const std::string& name, std::size_t window);
  // Flattens whatever precedes it. Output size must equal class_count for the last layer.
  void add_linear(const std::string& name, Tensor weight, Tensor bias);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t class_count() const noexcept { return class_count_; }
  // Inputs to the final fully-connected layer.
  std::size_t feature_count() const;
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  // Output shape of the layers added so far: [C, H, W], or [n] after a linear layer.
  Shape activation_shape() const;
  const std::vector<NamedTensor>& params() const noexcept { return params_; }
  std::vector<NamedTensor>& mutable_params() noexcept { return params_; }
  std::size_t parameter_count() const;
  // Index in params() of the head's weight and bias.
  std::size_t head_weight_index() const;
  std::size_t head_bias_index() const;

  bool trained() const noexcept { return trained_; }
  void set_trained(bool on) noexcept { trained_ = on; }

  // Puts every parameter on the tape, as differentiable leaves or constants.
  std::vector<Var> bind(Tape& tape, bool differentiable) const;
  // input [N, C, H, W] (or [C, H, W] for one sample) -> logits [N, K].
  Var forward(const Var& input, std::span<const Var> params) const;
  // Logits of a single [C, H, W] image.
  std::vector<double> logits(const Tensor& image) const;

  // Structure and weights as container entries; the first entries describe layers.
  std::vector<NamedTensor> to_entries() const;
  static ModelGraph from_entries(const std::vector<NamedTensor>& entries);
  std::uint64_t fingerprint() const;

 private:
  void check_new_name(const std::string& name) const;
  std::size_t add_param(const std::string& name, Tensor value);

  Shape input_shape_;
  std::size_t class_count_;
  std::vector<Layer> layers_;
  std::vector<NamedTensor> params_;
  Shape shape_;  // running activation shape while building
  bool trained_ = false;
};

// Three conv+relu stages (stride 1, 2, 2), a 2x2 average pool and a linear head.
// Weights and biases are uniform in +-1/sqrt(fan_in). ConfigError when height or
// width is below 16.
struct MicroCnnOptions {
  std::size_t channels1 = 4;
  std::size_t channels2 = 8;
  std::size_t channels3 = 8;
  std::size_t stride1 = 1;
  std::size_t stride2 = 2;
  std::size_t stride3 = 1;
  std::size_t pool = 2;
};
ModelGraph build_micro_cnn(const Shape& input_shape, std::size_t class_count, std::uint64_t seed,
                           const MicroCnnOptions& options = {});

// Flatten followed by one linear layer.
ModelGraph build_linear_model(const Shape& input_shape, std::size_t class_count,
                              std::uint64_t seed);

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean loss per epoch, in epoch order
  double accuracy = 0.0;           // after training; exact label-set match in multi mode
};

// Minibatch Adam. Single-label datasets use cross entropy, multi-label datasets
// multi-hot BCE. NumericError naming the epoch on divergence. Marks the model trained.
TrainResult train(ModelGraph& model, const Dataset& data, const TrainOptions& options);

// Fraction of samples whose prediction equals the label set: argmax for single
// label, logits > 0 for multi-label.
double accuracy(const ModelGraph& model, const Dataset& data);

void save_weights(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_weights(const std::filesystem::path& path);

// ---- NCB label scorer ----

enum class NcbMode { copy_weights, train_on_gradients };

// Fed the scaled head-weight gradient reshaped to [K, F, 1, 1]: a shared linear
// stage F -> hidden, 1x1 average pooling, inference batch norm, and a per-class
// fully-connected scorer producing one score per row.
class NCBGraph {
 public:
  // hidden = 0 means hidden = feature_count (identity-initialised linear stage).
  NCBGraph(std::size_t class_count, std::size_t feature_count, std::size_t hidden = 0);

  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t feature_count() const noexcept { return feature_count_; }
  std::size_t hidden() const noexcept { return hidden_; }
  Shape input_shape() const { return {class_count_, feature_count_, 1, 1}; }
  const std::vector<NamedTensor>& params() const noexcept { return params_; }
  std::vector<NamedTensor>& mutable_params() noexcept { return params_; }

  // input [N*K, F, 1, 1] (N stacked gradients) -> pre-sigmoid scores [N*K].
  Var forward(const Var& input, std::span<const Var> params) const;
  // Sigmoid scores of one scaled gradient of shape input_shape() (or [K, F]).
  std::vector<double> scores(const Tensor& input) const;

  std::uint64_t checksum() const;

 private:
  std::size_t class_count_;
  std::size_t feature_count_;
  std::size_t hidden_;
  std::vector<NamedTensor> params_;
};

struct NcbExample {
  Tensor head_gradient;  // [K, F], unscaled
  std::vector<std::size_t> labels;
};

struct NcbTrainOptions {
  double input_scale = 7e8;
  std::size_t epochs = 300;
  double lr = 1e-2;
  std::size_t hidden = 16;  // width of the linear stage; 0 = feature count
  bool corpus_statistics = false;  // batch norm from corpus statistics instead of identity
  std::uint64_t seed = 0;
};

// copy_weights: full-width identity linear stage and batch norm, scorer = model head.
// ConfigError for an untrained model. train_on_gradients: full-batch Adam on
// multi-hot BCE over `corpus`. Batch norm stays at identity statistics by default
// so the input scale saturates the scores; corpus_statistics recomputes them each epoch.
NCBGraph build_ncb(const ModelGraph& model, NcbMode mode, std::span<const NcbExample> corpus = {},
                   const NcbTrainOptions& options = {});

// Same container and magic as model weights, with an "ncb.header" first entry.
void save_ncb(const NCBGraph& ncb, const std::filesystem::path& path);
NCBGraph load_ncb(const std::filesystem::path& path);

}  // namespace glab
