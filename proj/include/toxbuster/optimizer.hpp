#pragma once

#include <cstddef>
#include <vector>

#include "toxbuster/encoder.hpp"

namespace toxbuster {

/// Linear warmup from 0 to `peak` over ceil(warmup_ratio * total) steps, then
/// linear decay to 0 at `total`.
double scheduled_lr(std::size_t step, std::size_t total_steps, double warmup_ratio, double peak);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Biases and layer-norm parameters are not decayed.
class AdamW {
public:
  AdamW(const ParamLayout &layout, AdamWConfig cfg);

  void step(Parameters<float> &params, const Gradients<float> &grads, double lr);
  std::size_t steps() const { return t_; }

private:
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<char> decay_;
  std::size_t t_ = 0;
};

} // namespace toxbuster
