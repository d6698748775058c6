#pragma once

// Adam with an L2 penalty and global gradient-norm clipping. A step applies
// them in the order L2 -> clip -> Adam.

#include <cmath>
#include <string>
#include <vector>

#include "dfgn/model.hpp"

namespace dfgn {

struct AdamSettings {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2_lambda = 1e-5;
  double clip_norm = 5.0;

  static AdamSettings from(const RunConfig& c) {
    return {c.learning_rate, c.beta1, c.beta2, c.adam_epsilon, c.l2_lambda, c.clip_norm};
  }
};

struct OptimizerState {
  AdamSettings settings;
  std::uint64_t step = 0;
  // Moment buffers in ParamStore order.
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState for_params(const ParamStore& params, AdamSettings s) {
    OptimizerState st;
    st.settings = s;
    for (const auto& [name, t] : params) {
      st.first_moment.emplace_back(t.numel(), 0.0);
      st.second_moment.emplace_back(t.numel(), 0.0);
    }
    return st;
  }
};

// grad += 2 * lambda * param, i.e. the gradient of lambda * ||w||^2.
inline void apply_l2(ParamStore& params, double lambda) {
  if (lambda == 0.0) return;
  for (auto& [name, t] : params) {
    auto g = t.mutable_grad();
    auto w = t.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * lambda * w[i];
  }
}

inline double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    for (double g : t.grad()) sq += g * g;
  return std::sqrt(sq);
}

// Rescales every gradient by max_norm / norm when the global norm exceeds
// max_norm. Returns the norm before clipping.
inline double clip_global_norm(ParamStore& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params)
      for (auto& g : t.mutable_grad()) g *= s;
  }
  return norm;
}

// One bias-corrected Adam update from the current gradients.
inline void adam_step(OptimizerState& st, ParamStore& params) {
  if (st.first_moment.size() != params.size())
    throw ContractError("optimizer state tracks " + std::to_string(st.first_moment.size()) +
                        " tensors but the model has " + std::to_string(params.size()));
  const auto& s = st.settings;
  ++st.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(st.step));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto w = t.mutable_data();
    auto g = t.grad();
    auto& m = st.first_moment[k];
    auto& v = st.second_moment[k];
    if (m.size() != w.size()) throw ContractError("moment buffer shape differs for " + name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
    ++k;
  }
}

// L2 -> clip -> Adam, then clears the gradients.
inline void optimizer_step(OptimizerState& st, ParamStore& params) {
  apply_l2(params, st.settings.l2_lambda);
  clip_global_norm(params, st.settings.clip_norm);
  adam_step(st, params);
  params.zero_grad();
}

}  // namespace dfgn
