#include "glab/sprites.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "glab/errors.hpp"

namespace glab {

namespace {

constexpr std::size_t kMinSprite = 8;

// Whether pixel (r, c) of an s x s box belongs to the shape; coordinates are
// taken at pixel centres relative to the box centre.
bool inside(std::size_t cls, std::size_t s, std::size_t r, std::size_t c) {
  const double half = static_cast<double>(s) / 2.0;
  const double y = static_cast<double>(r) + 0.5 - half;
  const double x = static_cast<double>(c) + 0.5 - half;
  const double rad = std::hypot(x, y);
  const double arm = std::max(1.0, static_cast<double>(s) / 8.0);
  switch (cls) {
    case 0:  // square
      return std::abs(x) <= 0.8 * half && std::abs(y) <= 0.8 * half;
    case 1:  // circle
      return rad <= half;
    case 2: {  // triangle, apex up
      const double t = (y + half) / (2.0 * half);
      return t >= 0.0 && std::abs(x) <= t * half;
    }
    case 3:  // cross
      return std::abs(x) <= arm || std::abs(y) <= arm;
    case 4:  // ring
      return rad <= half && rad >= 0.55 * half;
    case 5:  // horizontal bar
      return std::abs(y) <= arm;
    case 6:  // vertical bar
      return std::abs(x) <= arm;
    default:  // dot
      return rad <= 0.35 * half;
  }
}

void draw(Tensor& image, std::size_t cls, std::size_t size, std::size_t top, std::size_t left,
          std::span<const double> color) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t q = 0; q < size; ++q) {
      if (!inside(cls, size, r, q)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) image[(ch * h + top + r) * w + left + q] = color[ch];
    }
  }
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

SpriteDataset generate_sprites(const SpriteOptions& o, std::uint64_t seed) {
  if (o.class_count == 0 || o.class_count > kSpriteClasses.size()) {
    throw ConfigError("sprite class count must be in 1.." + std::to_string(kSpriteClasses.size()));
  }
  if (o.channels != 1 && o.channels != 3) throw ConfigError("sprites need 1 or 3 channels");
  if (o.mode == LabelMode::multi) {
    if (o.max_sprites == 0 || o.max_sprites > std::min<std::size_t>(4, o.class_count)) {
      throw ConfigError("max_sprites must be in 1..min(4, class_count)");
    }
    if (o.height / 2 < kMinSprite + 2 || o.width / 2 < kMinSprite + 2 ||
        (o.max_sprites == 3 && (o.height < 32 || o.width < 32))) {
      throw GenerationError("canvas " + std::to_string(o.height) + "x" + std::to_string(o.width) +
                            " cannot hold non-overlapping sprites");
    }
  } else if (o.height < kMinSprite + 2 || o.width < kMinSprite + 2) {
    throw GenerationError("canvas too small for a sprite");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> intensity(0.4, 1.0);
  SpriteDataset data;
  data.class_count = o.class_count;
  data.mode = o.mode;
  std::vector<std::size_t> classes(o.class_count);
  std::iota(classes.begin(), classes.end(), 0);

  for (std::size_t n = 0; n < o.count; ++n) {
    Tensor image({o.channels, o.height, o.width}, 0.0);
    std::vector<std::size_t> labels;
    std::vector<double> color(o.channels);
    auto next_color = [&] {
      for (auto& v : color) v = intensity(rng);
    };
    if (o.mode == LabelMode::single) {
      const std::size_t limit = std::min(o.height, o.width) - 2;
      const std::size_t size = pick(rng, kMinSprite + 2, std::min<std::size_t>(18, limit));
      const std::size_t cls = pick(rng, 0, o.class_count - 1);
      const std::size_t top = pick(rng, 1, o.height - size - 1);
      const std::size_t left = pick(rng, 1, o.width - size - 1);
      next_color();
      draw(image, cls, size, top, left, color);
      labels.push_back(cls);
    } else {
      const std::size_t k = pick(rng, 1, o.max_sprites);
      std::shuffle(classes.begin(), classes.end(), rng);
      std::array<std::size_t, 4> cells = {0, 1, 2, 3};
      std::shuffle(cells.begin(), cells.end(), rng);
      const std::size_t ch = o.height / 2, cw = o.width / 2;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t size = pick(rng, kMinSprite, std::min(ch, cw) - 2);
        const std::size_t top = (cells[i] / 2) * ch + pick(rng, 1, ch - size - 1);
        const std::size_t left = (cells[i] % 2) * cw + pick(rng, 1, cw - size - 1);
        next_color();
        draw(image, classes[i], size, top, left, color);
        labels.push_back(classes[i]);
      }
      std::sort(labels.begin(), labels.end());
    }
    data.images.push_back(std::move(image));
    data.label_sets.push_back(std::move(labels));
  }
  return data;
}

}  // namespace glab
