#pragma once

// Compare, convolutional aggregation, branch MLPs, fusion and the listwise
// KL objective.

#include <span>
#include <vector>

#include "dfgn/tensor.hpp"

namespace dfgn {

inline Tensor compare(const Tensor& aligned, const Tensor& encoded) {
  if (aligned.shape() != encoded.shape())
    throw DimensionError("compare: " + shape_str(aligned.shape()) + " vs " +
                         shape_str(encoded.shape()));
  return mul(aligned, encoded);
}

// One filter bank per window width: weights [width*d x F], bias [F].
struct ConvBank {
  std::vector<std::size_t> windows;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t filters() const { return biases.empty() ? 0 : biases.front().numel(); }
  std::size_t output_size() const { return 2 * windows.size() * filters(); }
};

// For every width: relu convolutions at each start position, then max and mean
// over the positions that start on a live row. Output layout is
// [w1 max, w1 mean, w2 max, w2 mean, ...], each F long.
inline Tensor conv_aggregate(const Tensor& y, const Mask& mask, const ConvBank& bank) {
  if (y.rank() != 2) throw DimensionError("conv_aggregate expects [len x d], got " + shape_str(y.shape()));
  if (mask.size() != y.dim(0))
    throw DimensionError("conv_aggregate mask has " + std::to_string(mask.size()) +
                         " entries for " + std::to_string(y.dim(0)) + " rows");
  std::vector<Tensor> pooled;
  for (std::size_t k = 0; k < bank.windows.size(); ++k) {
    auto windows = unfold_windows(y, bank.windows[k]);
    auto maps = relu(add(matmul(windows, bank.weights[k]), bank.biases[k]));
    Mask valid(maps.dim(0));
    for (std::size_t p = 0; p < valid.size(); ++p) valid[p] = mask[p];
    pooled.push_back(reduce(maps, 0, Reduce::kMax, valid));
    pooled.push_back(reduce(maps, 0, Reduce::kMean, valid));
  }
  return concat(pooled);
}

// x [in] -> x W + b, W [in x out].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto row = matmul(reshape(x, {1, x.numel()}), w);
  return add(reshape(row, {w.dim(1)}), b);
}

struct BranchMlp {
  Tensor w1, b1;  // [in x h], [h]
  Tensor w2, b2;  // [h x h] or [h x 1] for scalar branch scores
};

inline Tensor mlp_forward(const Tensor& x, const BranchMlp& m) {
  return linear(relu(linear(x, m.w1, m.b1)), m.w2, m.b2);
}

struct ScoringHead {
  BranchMlp question;
  BranchMlp answer;
  Tensor fuse_w;  // [2h x 1] (or [2 x 1])
  Tensor fuse_b;  // [1]
};

inline Tensor score_pair(const Tensor& agg_q, const Tensor& agg_a, const ScoringHead& head) {
  auto joined = concat({mlp_forward(agg_q, head.question), mlp_forward(agg_a, head.answer)});
  return linear(joined, head.fuse_w, head.fuse_b);
}

// Uniform distribution over the positive labels.
inline std::vector<double> listwise_target(std::span<const int> labels) {
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("labels must be binary");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0) throw ContractError("listwise loss needs at least one positive label");
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    t[i] = static_cast<double>(labels[i]) / static_cast<double>(positives);
  return t;
}

inline Tensor listwise_loss(const Tensor& logits, std::span<const int> labels) {
  auto t = listwise_target(labels);
  return listwise_kl(logits, t);
}

}  // namespace dfgn
