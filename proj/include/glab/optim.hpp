#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace glab {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over one flat parameter block.
class Adam {
 public:
  Adam(std::size_t size, AdamOptions options);

  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamOptions opt_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace glab
