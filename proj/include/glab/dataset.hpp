#pragma once

#include <cstddef>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

enum class LabelMode { single, multi };

// Images [C, H, W] in [0, 1] with their ground-truth label sets.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::vector<std::size_t>> label_sets;
  std::size_t class_count = 0;
  LabelMode mode = LabelMode::single;

  std::size_t size() const noexcept { return images.size(); }
};

}  // namespace glab
