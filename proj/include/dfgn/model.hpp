#pragma once

// The assembled answer-selection network and its named parameter store.

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfgn/aggregate_head.hpp"
#include "dfgn/config.hpp"
#include "dfgn/encoder.hpp"
#include "dfgn/feature_gen.hpp"
#include "dfgn/random.hpp"
#include "dfgn/threshold_attention.hpp"

namespace dfgn {

// Trainable tensors in a fixed insertion order. Frozen embeddings never live here.
class ParamStore {
 public:
  Tensor& add(std::string name, Tensor t) {
    if (contains(name)) throw ContractError("duplicate parameter " + name);
    entries_.emplace_back(std::move(name), std::move(t));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return true;
    return false;
  }

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return t;
    throw ContractError("no parameter named " + name);
  }
  Tensor& get(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).get(name));
  }

  // Undefined tensor when absent.
  Tensor find(const std::string& name) const { return contains(name) ? get(name) : Tensor{}; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)), drawn from a stream keyed by the
// parameter name so that a parameter gets the same values in every ablation.
inline Tensor glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                     std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(name)));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

// Which parts of the network are wired in.
struct Wiring {
  FeatureToggles features;
  bool encoder = true;
  bool compare = true;
  bool second_coattention = true;

  static Wiring from(const AblationSwitches& s) {
    Wiring w;
    const bool none = s.no_all_features;
    w.features = {.self = !(none || s.no_self_features),
                  .intra = !(none || s.no_intra_features),
                  .co = !(none || s.no_co_features)};
    w.encoder = !s.no_encoder;
    w.compare = !s.no_compare;
    w.second_coattention = !s.no_second_coattention;
    return w;
  }
};

// Intermediate values of one forward pass, kept for inspection.
struct PairTrace {
  AttentionFeatureSet question_features;
  AttentionFeatureSet answer_features;
  Sentence question_augmented;
  Sentence answer_augmented;
  Tensor question_encoded;
  Tensor answer_encoded;
  // Alignment of answer rows onto question positions (and the reverse).
  ThresholdedAlignment question_alignment;
  ThresholdedAlignment answer_alignment;
  Tensor question_affinity;  // G for the question side: [a' x q']
  Tensor answer_affinity;    // [q' x a']
  Tensor logit;
};

class DfgnModel {
 public:
  DfgnModel(const RunConfig& cfg, std::uint64_t seed)
      : dim_(cfg.embedding_dim),
        dropout_(cfg.dropout),
        wiring_(Wiring::from(cfg.ablation)),
        threshold_opts_{cfg.renormalize_retained, cfg.threshold_straight_through} {
    validate(cfg);
    const std::size_t d = dim_;
    auto square = [&](const std::string& name) { params_.add(name, glorot(name, d, d, seed)); };
    if (wiring_.features.self) {
      square("self.q");
      square("self.a");
    }
    if (wiring_.encoder) {
      square("encoder.q.gate");
      square("encoder.q.value");
      square("encoder.a.gate");
      square("encoder.a.value");
    }
    if (wiring_.second_coattention) {
      square("threshold.q");
      square("threshold.a");
    }
    const std::size_t f = cfg.conv_filters;
    for (auto w : cfg.conv_windows) {
      const auto base = "conv." + std::to_string(w);
      conv_.windows.push_back(w);
      conv_.weights.push_back(params_.add(base + ".weight", glorot(base + ".weight", w * d, f, seed)));
      conv_.biases.push_back(params_.add(base + ".bias", Tensor::zeros({f}, true)));
    }
    const std::size_t in = conv_.output_size();
    const std::size_t h = cfg.mlp_hidden;
    const std::size_t out = cfg.scalar_branch_scores ? 1 : h;
    auto branch = [&](const std::string& side) {
      const auto base = "mlp." + side;
      BranchMlp m;
      m.w1 = params_.add(base + ".w1", glorot(base + ".w1", in, h, seed));
      m.b1 = params_.add(base + ".b1", Tensor::zeros({h}, true));
      m.w2 = params_.add(base + ".w2", glorot(base + ".w2", h, out, seed));
      m.b2 = params_.add(base + ".b2", Tensor::zeros({out}, true));
      return m;
    };
    head_.question = branch("q");
    head_.answer = branch("a");
    head_.fuse_w = params_.add("fuse.weight", glorot("fuse.weight", 2 * out, 1, seed));
    head_.fuse_b = params_.add("fuse.bias", Tensor::zeros({1}, true));
  }

  // Copies are independent; parameters are cloned, not shared.
  DfgnModel(const DfgnModel& other) { *this = other; }
  DfgnModel& operator=(const DfgnModel& other) {
    if (this == &other) return *this;
    dim_ = other.dim_;
    dropout_ = other.dropout_;
    wiring_ = other.wiring_;
    threshold_opts_ = other.threshold_opts_;
    conv_ = other.conv_;
    head_ = other.head_;
    params_ = ParamStore{};
    for (const auto& [name, t] : other.params_) params_.add(name, t.detach(true));
    rebind();
    return *this;
  }
  DfgnModel(DfgnModel&&) = default;
  DfgnModel& operator=(DfgnModel&&) = default;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Wiring& wiring() const { return wiring_; }
  std::size_t dim() const { return dim_; }

  // Scalar relevance logit for one question/answer pair.
  Tensor score(const Sentence& q, const Sentence& a, bool training, std::uint64_t dropout_seed,
               PairTrace* trace = nullptr) const {
    if (q.dim() != dim_ || a.dim() != dim_)
      throw DimensionError("model expects " + std::to_string(dim_) + "-dim word vectors");
    Sentence xq = q, xa = a;
    if (wiring_.features.any()) {
      auto [fq, fa] = generate_features(q, a, params_.find("self.q"), params_.find("self.a"),
                                        wiring_.features);
      xq = augment(q, fq, wiring_.features);
      xa = augment(a, fa, wiring_.features);
      if (trace) {
        trace->question_features = std::move(fq);
        trace->answer_features = std::move(fa);
      }
    }
    Tensor eq = xq.words, ea = xa.words;
    if (wiring_.encoder) {
      eq = gated_encode(xq.words, {params_.get("encoder.q.gate"), params_.get("encoder.q.value")},
                        dropout_, training, mix_seed(dropout_seed, 1));
      ea = gated_encode(xa.words, {params_.get("encoder.a.gate"), params_.get("encoder.a.value")},
                        dropout_, training, mix_seed(dropout_seed, 2));
    }
    Tensor hq = eq, ha = ea;
    if (wiring_.second_coattention) {
      auto gq = second_affinity(ea, eq);
      auto q_align = thresholded_align(gq, threshold_affinity(ea, params_.get("threshold.q"), eq),
                                       ea, xa.mask, threshold_opts_);
      auto ga = second_affinity(eq, ea);
      auto a_align = thresholded_align(ga, threshold_affinity(eq, params_.get("threshold.a"), ea),
                                       eq, xq.mask, threshold_opts_);
      hq = q_align.rows;
      ha = a_align.rows;
      if (trace) {
        trace->question_affinity = gq;
        trace->answer_affinity = ga;
        trace->question_alignment = std::move(q_align);
        trace->answer_alignment = std::move(a_align);
      }
    }
    auto yq = wiring_.compare ? compare(hq, eq) : hq;
    auto ya = wiring_.compare ? compare(ha, ea) : ha;
    auto logit = score_pair(conv_aggregate(yq, xq.mask, conv_), conv_aggregate(ya, xa.mask, conv_),
                            head_);
    if (trace) {
      trace->question_augmented = xq;
      trace->answer_augmented = xa;
      trace->question_encoded = eq;
      trace->answer_encoded = ea;
      trace->logit = logit;
    }
    return logit;
  }

  // Logits of every candidate, in order, as one [N] tensor.
  Tensor logits(const Sentence& q, std::span<const Sentence> candidates, bool training,
                std::uint64_t dropout_seed) const {
    std::vector<Tensor> scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
      scores.push_back(score(q, candidates[i], training, mix_seed(dropout_seed, i)));
    return concat(scores);
  }

  Tensor group_loss(const Sentence& q, std::span<const Sentence> candidates,
                    std::span<const int> labels, bool training, std::uint64_t dropout_seed) const {
    if (candidates.size() != labels.size())
      throw DimensionError("group has " + std::to_string(candidates.size()) + " candidates and " +
                           std::to_string(labels.size()) + " labels");
    return listwise_loss(logits(q, candidates, training, dropout_seed), labels);
  }

 private:
  void rebind() {
    for (std::size_t k = 0; k < conv_.windows.size(); ++k) {
      const auto base = "conv." + std::to_string(conv_.windows[k]);
      conv_.weights[k] = params_.get(base + ".weight");
      conv_.biases[k] = params_.get(base + ".bias");
    }
    for (auto [side, m] : {std::pair{"q", &head_.question}, std::pair{"a", &head_.answer}}) {
      const auto base = std::string("mlp.") + side;
      m->w1 = params_.get(base + ".w1");
      m->b1 = params_.get(base + ".b1");
      m->w2 = params_.get(base + ".w2");
      m->b2 = params_.get(base + ".b2");
    }
    head_.fuse_w = params_.get("fuse.weight");
    head_.fuse_b = params_.get("fuse.bias");
  }

  std::size_t dim_ = 0;
  double dropout_ = 0.0;
  Wiring wiring_;
  ThresholdOptions threshold_opts_;
  ParamStore params_;
  ConvBank conv_;
  ScoringHead head_;
};

}  // namespace dfgn
