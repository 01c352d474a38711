#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "glab/dataset.hpp"

namespace glab {

using SpriteDataset = Dataset;

inline constexpr std::array<std::string_view, 8> kSpriteClasses = {
    "square", "circle", "triangle", "cross", "ring", "bar-h", "bar-v", "dot"};

struct SpriteOptions {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t count = 256;
  std::size_t class_count = 8;  // first class_count shapes of kSpriteClasses
  LabelMode mode = LabelMode::single;
  std::size_t max_sprites = 3;  // multi-label only
};

// Bright sprites (intensity 0.4..1 per channel) on a black background. Single-
// label images hold one sprite anywhere on the canvas; multi-label images hold
// 1..max_sprites distinct classes in distinct cells of a jittered 2x2 grid, so
// sprites never overlap. Label sets are sorted. GenerationError when the canvas
// is too small to place the sprites.
SpriteDataset generate_sprites(const SpriteOptions& options, std::uint64_t seed);

}  // namespace glab
