#pragma once

// Second co-attention with a learned dynamic threshold.
//
// For target position j the plain weights w = softmax_i(G[i, j]) are compared
// cell by cell with threshold weights t = softmax_i(G~[i, j]), where G~ comes
// from a bilinear form with its own parameters. Cells with w < t are dropped;
// the survivors are used as-is (no renormalization by default) to blend the
// source rows.

#include "dfgn/feature_gen.hpp"
#include "dfgn/tensor.hpp"

namespace dfgn {

// [source_len x target_len]
inline Tensor second_affinity(const Tensor& source, const Tensor& target) {
  return affinity(source, target);
}

inline Tensor threshold_affinity(const Tensor& source, const Tensor& w, const Tensor& target) {
  if (w.rank() != 2 || w.dim(0) != source.dim(1) || w.dim(1) != target.dim(1))
    throw DimensionError("threshold weights " + shape_str(w.shape()) + " do not fit " +
                         shape_str(source.shape()) + " and " + shape_str(target.shape()));
  return matmul(matmul(source, w), transpose(target));
}

struct ThresholdOptions {
  bool renormalize = false;
  bool straight_through = false;
};

// All weight matrices are [target_len x source_len]: row j belongs to target j.
struct ThresholdedAlignment {
  Tensor rows;        // [target_len x d]
  Tensor weights;     // w
  Tensor thresholds;  // t
  Tensor retained;    // phi(w, t), renormalized when requested
};

inline ThresholdedAlignment thresholded_align(const Tensor& g, const Tensor& g_threshold,
                                              const Tensor& source, const Mask& source_mask,
                                              const ThresholdOptions& opt = {}) {
  if (g.shape() != g_threshold.shape())
    throw DimensionError("affinity " + shape_str(g.shape()) + " and threshold affinity " +
                         shape_str(g_threshold.shape()) + " differ");
  if (g.rank() != 2 || g.dim(0) != source.dim(0))
    throw DimensionError("affinity " + shape_str(g.shape()) + " does not index source " +
                         shape_str(source.shape()));
  auto w = softmax_masked(transpose(g), source_mask);
  auto t = softmax_masked(transpose(g_threshold), source_mask);
  auto kept = phi_filter(w, t, opt.straight_through);
  if (opt.renormalize) kept = normalize_rows(kept);
  return {matmul(kept, source), w, t, kept};
}

}  // namespace dfgn
