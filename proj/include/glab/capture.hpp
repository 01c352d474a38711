#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "glab/model.hpp"

namespace glab {

// What an honest-but-curious server sees after one client step: parameter
// gradients in model order plus enough metadata to check them against a model.
// There is deliberately no field for the client's pixels or labels.
struct GradientCapture {
  std::vector<NamedTensor> grads;
  std::uint64_t arch_fingerprint = 0;
  LossKind loss_kind = LossKind::cross_entropy;
  std::size_t class_count = 0;

  const Tensor& grad(std::string_view name) const;
};

// One batch-size-1 FedSGD step: exact gradients of the loss at (image, labels).
// ContractError for an out-of-range label or a single-label loss with several labels.
GradientCapture client_step(const ModelGraph& model, const Tensor& image,
                            std::span<const std::size_t> labels, LossKind kind);

// Element-wise mean per layer. ContractError on fingerprint mismatch or an empty list.
GradientCapture average_captures(std::span<const GradientCapture> captures);

// MismatchError unless the capture was produced by `model` (same fingerprint,
// parameter names and shapes).
void check_capture_matches(const GradientCapture& capture, const ModelGraph& model);

// Same container as the weights file, magic "MGIG".
void save_capture(const GradientCapture& capture, const std::filesystem::path& path);
GradientCapture load_capture(const std::filesystem::path& path);

std::vector<NamedTensor> capture_entries(const GradientCapture& capture);
GradientCapture capture_from_entries(const std::vector<NamedTensor>& entries);

}  // namespace glab
