#pragma once

// Sentence-level feature generation: self, intra and co-attention matrices,
// extractive max/mean pooling over them, alignment pooling followed by
// sequence max/mean pooling, and the augmented sentence that carries the ten
// resulting vectors after its words.

#include <array>
#include <string_view>
#include <utility>
#include <vector>

#include "dfgn/tensor.hpp"

namespace dfgn {

// Word vectors [len x d] and a per-position liveness mask.
struct Sentence {
  Tensor words;
  Mask mask;

  std::size_t length() const { return words.dim(0); }
  std::size_t dim() const { return words.dim(1); }
};

enum class Reducer { kMax, kMean };

inline Reduce to_reduce(Reducer r) { return r == Reducer::kMax ? Reduce::kMax : Reduce::kMean; }

inline Tensor self_projection(const Tensor& x, const Tensor& w) { return tanh(matmul(x, w)); }

// Row-by-row dot products: X Y^T.
inline Tensor affinity(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1))
    throw DimensionError("affinity needs a shared hidden size: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
  return matmul(x, transpose(y));
}

struct PooledFeature {
  Tensor vector;   // [d]
  Tensor weights;  // [len], softmax over the sentence's positions
};

// Scores each position of `x` (indexed by `target_axis` of `m`) by reducing
// `m` over its other axis, restricted to `other_mask` when given, then returns
// the softmax-weighted sum of x's rows.
inline PooledFeature extractive_pool(const Tensor& m, std::size_t target_axis, const Tensor& x,
                                     const Mask& x_mask, Reducer reducer,
                                     const Mask& other_mask = {}) {
  if (m.rank() != 2 || target_axis > 1)
    throw DimensionError("extractive_pool needs a matrix and target axis 0 or 1");
  if (m.dim(target_axis) != x.dim(0))
    throw DimensionError("extractive_pool: target axis has " + std::to_string(m.dim(target_axis)) +
                         " positions but sentence has " + std::to_string(x.dim(0)));
  auto scores = reduce(m, 1 - target_axis, to_reduce(reducer), other_mask);
  auto weights = softmax_masked(scores, x_mask);
  auto pooled = matmul(reshape(weights, {1, weights.numel()}), x);
  return {reshape(pooled, {x.dim(1)}), weights};
}

struct AlignedSequence {
  Tensor rows;     // [n x d]; row j is the blend of v aligned to target j
  Tensor weights;  // [n x m]; row j is the softmax over v's positions
};

// Column j of `m` [m x n] scores every row of `v` [m x d] against target j.
inline AlignedSequence alignment_pool(const Tensor& m, const Tensor& v, const Mask& v_mask) {
  if (m.rank() != 2 || v.rank() != 2 || m.dim(0) != v.dim(0))
    throw DimensionError("alignment_pool: " + shape_str(m.shape()) + " does not index " +
                         shape_str(v.shape()));
  auto weights = softmax_masked(transpose(m), v_mask);
  return {matmul(weights, v), weights};
}

// Per-dimension max or mean over the unmasked rows.
inline Tensor sequence_pool(const Tensor& r, const Mask& mask, Reducer reducer) {
  return reduce(r, 0, to_reduce(reducer), mask);
}

// Slot order of the appended features.
enum class FeatureSlot : std::size_t {
  kMaxSelf,
  kMaxIntra,
  kMaxCo,
  kMeanSelf,
  kMeanIntra,
  kMeanCo,
  kAlignMaxIntra,
  kAlignMaxCo,
  kAlignMeanIntra,
  kAlignMeanCo,
};

inline constexpr std::size_t kFeatureCount = 10;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "M_self", "M_intra", "M_co", "N_self", "N_intra",
    "N_co",   "K_intra", "K_co", "L_intra", "L_co"};

enum class FeatureFamily { kSelf, kIntra, kCo };

inline constexpr FeatureFamily family_of(FeatureSlot s) {
  switch (s) {
    case FeatureSlot::kMaxSelf:
    case FeatureSlot::kMeanSelf:
      return FeatureFamily::kSelf;
    case FeatureSlot::kMaxIntra:
    case FeatureSlot::kMeanIntra:
    case FeatureSlot::kAlignMaxIntra:
    case FeatureSlot::kAlignMeanIntra:
      return FeatureFamily::kIntra;
    default:
      return FeatureFamily::kCo;
  }
}

struct FeatureToggles {
  bool self = true;
  bool intra = true;
  bool co = true;

  bool enabled(FeatureFamily f) const {
    return f == FeatureFamily::kSelf ? self : f == FeatureFamily::kIntra ? intra : co;
  }
  bool enabled(FeatureSlot s) const { return enabled(family_of(s)); }
  bool any() const { return self || intra || co; }
  std::size_t count() const {
    return (self ? 2 : 0) + (intra ? 4 : 0) + (co ? 4 : 0);
  }
};

// The ten feature vectors of one side. Disabled families stay undefined.
struct AttentionFeatureSet {
  std::array<Tensor, kFeatureCount> slots;
  // Softmax weights of the six extractive pools, same indices as slots 0..5.
  std::array<Tensor, 6> pool_weights;

  const Tensor& operator[](FeatureSlot s) const { return slots[static_cast<std::size_t>(s)]; }
  Tensor& operator[](FeatureSlot s) { return slots[static_cast<std::size_t>(s)]; }
};

namespace detail {

// Features of `own` given the other sentence; `self_w` may be undefined when
// self features are off.
inline AttentionFeatureSet side_features(const Sentence& own, const Sentence& other,
                                         const Tensor& self_w, const FeatureToggles& on) {
  AttentionFeatureSet out;
  auto put = [&out](FeatureSlot s, PooledFeature p) {
    const auto i = static_cast<std::size_t>(s);
    out.slots[i] = std::move(p.vector);
    out.pool_weights[i] = std::move(p.weights);
  };
  if (on.self) {
    auto s = self_projection(own.words, self_w);
    put(FeatureSlot::kMaxSelf, extractive_pool(s, 0, own.words, own.mask, Reducer::kMax));
    put(FeatureSlot::kMeanSelf, extractive_pool(s, 0, own.words, own.mask, Reducer::kMean));
  }
  if (on.intra) {
    auto intra = affinity(own.words, own.words);
    put(FeatureSlot::kMaxIntra,
        extractive_pool(intra, 1, own.words, own.mask, Reducer::kMax, own.mask));
    put(FeatureSlot::kMeanIntra,
        extractive_pool(intra, 1, own.words, own.mask, Reducer::kMean, own.mask));
    auto aligned = alignment_pool(intra, own.words, own.mask);
    out[FeatureSlot::kAlignMaxIntra] = sequence_pool(aligned.rows, own.mask, Reducer::kMax);
    out[FeatureSlot::kAlignMeanIntra] = sequence_pool(aligned.rows, own.mask, Reducer::kMean);
  }
  if (on.co) {
    // [other_len x own_len]: column j scores own word j against every other word.
    auto co = affinity(other.words, own.words);
    put(FeatureSlot::kMaxCo,
        extractive_pool(co, 1, own.words, own.mask, Reducer::kMax, other.mask));
    put(FeatureSlot::kMeanCo,
        extractive_pool(co, 1, own.words, own.mask, Reducer::kMean, other.mask));
    auto aligned = alignment_pool(co, other.words, other.mask);
    out[FeatureSlot::kAlignMaxCo] = sequence_pool(aligned.rows, own.mask, Reducer::kMax);
    out[FeatureSlot::kAlignMeanCo] = sequence_pool(aligned.rows, own.mask, Reducer::kMean);
  }
  return out;
}

}  // namespace detail

// Feature sets for (question, answer). The co-attention matrices of the two
// sides are computed independently.
inline std::pair<AttentionFeatureSet, AttentionFeatureSet> generate_features(
    const Sentence& q, const Sentence& a, const Tensor& self_w_q, const Tensor& self_w_a,
    const FeatureToggles& on = {}) {
  if (q.dim() != a.dim())
    throw DimensionError("question and answer embeddings differ in size: " +
                         std::to_string(q.dim()) + " vs " + std::to_string(a.dim()));
  return {detail::side_features(q, a, self_w_q, on), detail::side_features(a, q, self_w_a, on)};
}

// Appends the enabled features after the sentence's rows; feature slots are
// always live.
inline Sentence augment(const Sentence& s, const AttentionFeatureSet& feats,
                        const FeatureToggles& on = {}) {
  std::vector<Tensor> parts{s.words};
  Mask mask = s.mask;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!on.enabled(static_cast<FeatureSlot>(i))) continue;
    if (!feats.slots[i].defined())
      throw ContractError("feature " + std::string(kFeatureNames[i]) + " was not generated");
    parts.push_back(feats.slots[i]);
    mask.push_back(true);
  }
  if (parts.size() == 1) return s;
  return {concat(parts), std::move(mask)};
}

}  // namespace dfgn
