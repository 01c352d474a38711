#include "glab/capture.hpp"

#include <cmath>

#include "glab/errors.hpp"

namespace glab {

namespace {

constexpr const char* kMetaEntry = "capture.meta";

}  // namespace

const Tensor& GradientCapture::grad(std::string_view name) const {
  for (const auto& g : grads) {
    if (g.name == name) return g.value;
  }
  throw ContractError("capture has no gradient for \"" + std::string(name) + "\"");
}

GradientCapture client_step(const ModelGraph& model, const Tensor& image,
                            std::span<const std::size_t> labels, LossKind kind) {
  if (image.shape() != model.input_shape()) {
    throw DimensionError("client_step: image " + shape_string(image.shape()) + " but model expects " +
                         shape_string(model.input_shape()));
  }
  if (labels.empty()) throw ContractError("client_step: no label");
  if (kind == LossKind::cross_entropy && labels.size() != 1) {
    throw ContractError("client_step: cross entropy takes exactly one label");
  }
  for (std::size_t l : labels) {
    if (l >= model.class_count()) {
      throw ContractError("client_step: label " + std::to_string(l) + " out of range for " +
                          std::to_string(model.class_count()) + " classes");
    }
  }
  Tape tape;
  const auto params = model.bind(tape, true);
  const Var loss = classification_loss(model.forward(tape.constant(image), params), labels, kind);
  const auto g = tape.grad(loss, params, false);

  GradientCapture c;
  c.arch_fingerprint = model.fingerprint();
  c.loss_kind = kind;
  c.class_count = model.class_count();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.grads.push_back({model.params()[i].name, g[i].value()});
  }
  return c;
}

GradientCapture average_captures(std::span<const GradientCapture> captures) {
  if (captures.empty()) throw ContractError("average_captures: no captures");
  GradientCapture out = captures[0];
  for (std::size_t i = 1; i < captures.size(); ++i) {
    const auto& c = captures[i];
    if (c.arch_fingerprint != out.arch_fingerprint || c.grads.size() != out.grads.size()) {
      throw ContractError("average_captures: captures come from different models");
    }
    for (std::size_t j = 0; j < c.grads.size(); ++j) {
      auto dst = out.grads[j].value.data();
      const auto src = c.grads[j].value.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  const double n = static_cast<double>(captures.size());
  if (captures.size() > 1) {
    for (auto& g : out.grads) {
      for (auto& v : g.value.data()) v /= n;
    }
  }
  return out;
}

void check_capture_matches(const GradientCapture& capture, const ModelGraph& model) {
  if (capture.arch_fingerprint != model.fingerprint()) {
    throw MismatchError("capture fingerprint does not match the model");
  }
  const auto& params = model.params();
  if (capture.grads.size() != params.size() || capture.class_count != model.class_count()) {
    throw MismatchError("capture layout does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (capture.grads[i].name != params[i].name ||
        capture.grads[i].value.shape() != params[i].value.shape()) {
      throw MismatchError("capture entry \"" + capture.grads[i].name + "\" does not match parameter \"" +
                          params[i].name + "\"");
    }
  }
}

std::vector<NamedTensor> capture_entries(const GradientCapture& capture) {
  std::vector<NamedTensor> out;
  const double hi = static_cast<double>(capture.arch_fingerprint >> 32);
  const double lo = static_cast<double>(capture.arch_fingerprint & 0xffffffffull);
  out.push_back({kMetaEntry, Tensor({4}, {capture.loss_kind == LossKind::cross_entropy ? 0.0 : 1.0,
                                          static_cast<double>(capture.class_count), hi, lo})});
  out.insert(out.end(), capture.grads.begin(), capture.grads.end());
  return out;
}

GradientCapture capture_from_entries(const std::vector<NamedTensor>& entries) {
  if (entries.empty() || entries[0].name != kMetaEntry || entries[0].value.size() != 4) {
    throw FormatError("missing capture metadata entry", 0);
  }
  const auto& m = entries[0].value;
  auto word = [](double v) {
    if (!(v >= 0.0) || v != std::floor(v) || v > 4294967295.0) {
      throw MismatchError("capture fingerprint field is corrupt");
    }
    return static_cast<std::uint64_t>(v);
  };
  if (m[0] != 0.0 && m[0] != 1.0) throw FormatError("unknown loss kind in capture", 0);
  GradientCapture c;
  c.loss_kind = m[0] == 0.0 ? LossKind::cross_entropy : LossKind::multi_hot_bce;
  if (!(m[1] >= 1.0) || m[1] != std::floor(m[1])) throw FormatError("bad class count in capture", 0);
  c.class_count = static_cast<std::size_t>(m[1]);
  c.arch_fingerprint = (word(m[2]) << 32) | word(m[3]);
  c.grads.assign(entries.begin() + 1, entries.end());
  return c;
}

void save_capture(const GradientCapture& capture, const std::filesystem::path& path) {
  write_container(path, "MGIG", capture_entries(capture));
}

GradientCapture load_capture(const std::filesystem::path& path) {
  return capture_from_entries(read_container(path, "MGIG"));
}

}  // namespace glab
