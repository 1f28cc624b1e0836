#include "toxbuster/optimizer.hpp"

#include <cmath>

#include "toxbuster/errors.hpp"

namespace toxbuster {

double scheduled_lr(std::size_t step, std::size_t total_steps, double warmup_ratio, double peak) {
  if (total_steps == 0) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (step >= total_steps) return 0.0;
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t decay = total_steps - warmup;
  return peak * static_cast<double>(total_steps - step) / static_cast<double>(decay);
}

AdamW::AdamW(const ParamLayout &layout, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto &s : layout.specs()) {
    m_.emplace_back(s.size(), 0.0f);
    v_.emplace_back(s.size(), 0.0f);
    decay_.push_back(s.rows > 1 ? 1 : 0);
  }
}

void AdamW::step(Parameters<float> &params, const Gradients<float> &grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(cfg_.eps);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto &p = params.tensors[t];
    const auto &g = grads.at(static_cast<int>(t));
    auto &m = m_[t];
    auto &v = v_[t];
    const float shrink = decay_[t] ? static_cast<float>(1.0 - lr * cfg_.weight_decay) : 1.0f;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] = p[i] * shrink - step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
  if (!params.all_finite()) throw NumericError("parameters became non-finite at optimizer step " + std::to_string(t_));
}

} // namespace toxbuster
