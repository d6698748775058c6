#pragma once

#include <cstdint>

#include "dfgn/random.hpp"
#include "dfgn/tensor.hpp"

namespace dfgn {

// Square [d x d] weights of one branch: `gate` feeds the sigmoid, `value` the tanh.
struct EncoderWeights {
  Tensor gate;
  Tensor value;
};

// Inverted dropout mask: each cell is 0 with probability `rate`, else 1/(1-rate).
inline Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
  Rng rng(seed);
  const double keep = 1.0 - rate;
  std::vector<double> m(shape_numel(shape));
  for (auto& v : m) v = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return Tensor::from(shape, std::move(m));
}

// e = sigmoid(x W_gate) * tanh(x W_value) per position; dropout only while training.
inline Tensor gated_encode(const Tensor& x, const EncoderWeights& w, double dropout_rate,
                           bool training, std::uint64_t seed) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(dropout_rate));
  auto e = mul(sigmoid(matmul(x, w.gate)), tanh(matmul(x, w.value)));
  if (!training || dropout_rate == 0.0) return e;
  return mul(e, dropout_mask(e.shape(), dropout_rate, seed));
}

}  // namespace dfgn
