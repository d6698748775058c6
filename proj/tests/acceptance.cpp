// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance [criterion...]
//
// With no arguments every criterion runs. Exit status is 1 when any criterion
// fails, 77 when every selected criterion was skipped, 0 otherwise.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "support.hpp"

namespace dfgn::acceptance {
namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::kSkip, std::move(d)}; }

// Collects failed expectations; the first few are reported.
class Checker {
 public:
  bool expect(bool ok, const std::string& what) {
    if (!ok) {
      ++failures_;
      if (first_.empty()) first_ = what;
    }
    return ok;
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_ == 0) return pass(summary);
    return fail(std::to_string(failures_) + " failed check(s), first: " + first_);
  }

 private:
  std::size_t failures_ = 0;
  std::string first_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

using Mat = std::vector<std::vector<double>>;

Mat rows_of(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

// Softmax of `scores` over the live entries; padded entries get 0.
std::vector<double> live_softmax(const std::vector<double>& scores, const Mask& mask) {
  double top = -INFINITY;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) top = std::max(top, scores[i]);
  std::vector<double> w(scores.size(), 0.0);
  double z = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) z += (w[i] = std::exp(scores[i] - top));
  for (auto& x : w) x /= z;
  return w;
}

std::vector<double> weighted_sum(const std::vector<double>& w, const Mat& rows) {
  std::vector<double> out(rows[0].size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * rows[i][k];
  return out;
}

// The ten features of `own` written out directly in scalars, in concatenation
// order.
std::vector<std::vector<double>> feature_oracle(const Mat& own, const Mask& own_mask, const Mat& other,
                                                const Mask& other_mask, const Mat& self_w) {
  const std::size_t n = own.size(), d = own[0].size();
  enum Kind { kMax, kMean };
  auto reduce_live = [](const std::vector<double>& v, const Mask& m, Kind k) {
    double best = -INFINITY, sum = 0;
    std::size_t live = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (m.empty() || m[i]) {
        best = std::max(best, v[i]);
        sum += v[i];
        ++live;
      }
    return k == kMax ? best : sum / static_cast<double>(live);
  };
  // Self: S = tanh(X W), word score reduces its hidden row.
  Mat s(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0;
      for (std::size_t m = 0; m < d; ++m) acc += own[i][m] * self_w[m][k];
      s[i][k] = std::tanh(acc);
    }
  auto self_feature = [&](Kind k) {
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) score[i] = reduce_live(s[i], {}, k);
    return weighted_sum(live_softmax(score, own_mask), own);
  };
  // Word j of `own` against every live row of `src`.
  auto extract = [&](const Mat& src, const Mask& src_mask, Kind k) {
    std::vector<double> score(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> col(src.size());
      for (std::size_t i = 0; i < src.size(); ++i) col[i] = dot(src[i], own[j]);
      score[j] = reduce_live(col, src_mask, k);
    }
    return weighted_sum(live_softmax(score, own_mask), own);
  };
  auto align = [&](const Mat& src, const Mask& src_mask, Kind k) {
    std::vector<double> out(d, k == kMax ? -INFINITY : 0.0);
    std::size_t live = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!own_mask[j]) continue;
      std::vector<double> col(src.size());
      for (std::size_t i = 0; i < src.size(); ++i) col[i] = dot(src[i], own[j]);
      auto row = weighted_sum(live_softmax(col, src_mask), src);
      for (std::size_t c = 0; c < d; ++c) out[c] = k == kMax ? std::max(out[c], row[c]) : out[c] + row[c];
      ++live;
    }
    if (k == kMean)
      for (auto& x : out) x /= static_cast<double>(live);
    return out;
  };
  return {self_feature(kMax),        extract(own, own_mask, kMax),     extract(other, other_mask, kMax),
          self_feature(kMean),       extract(own, own_mask, kMean),    extract(other, other_mask, kMean),
          align(own, own_mask, kMax), align(other, other_mask, kMax), align(own, own_mask, kMean),
          align(other, other_mask, kMean)};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  Checker c;
  double worst = 0;
  // Fixed toy instances. Central differences are only meaningful away from
  // ReLU, max-pool and threshold-gate boundaries; random instances land within
  // h of one often enough that they are not used here.
  for (std::uint64_t seed : {9, 23}) {
    auto cfg = testing::small_config(4);
    cfg.question_max_len = 2;
    cfg.answer_max_len = 3;
    DfgnModel m(cfg, seed);
    Rng rng(seed);
    auto q = testing::random_sentence(rng, 2, 2, 4);
    std::vector<Sentence> cands{testing::random_sentence(rng, 3, 3, 4), testing::random_sentence(rng, 3, 2, 4),
                                testing::random_sentence(rng, 3, 3, 4)};
    const std::vector<int> labels{1, 0, 0};
    std::vector<Tensor> inputs;
    for (auto& [name, t] : m.params()) inputs.push_back(t);
    const double err =
        finite_diff_check([&] { return m.group_loss(q, cands, labels, false, 0); }, inputs, 1e-5);
    worst = std::max(worst, err);
    c.expect(err <= 1e-4, "relative error " + fmt(err) + " with seed " + std::to_string(seed));
  }
  const double secs = std::chrono::duration<double>(clock::now() - start).count();
  c.expect(secs < 120.0, "took " + fmt(secs) + " s");
  return c.outcome("max relative error " + fmt(worst) + " in " + fmt(secs) + " s");
}

Outcome shape_suite() {
  Checker c;
  Rng rng(31);
  const std::vector<std::string_view> order = {"M_self", "M_intra", "M_co",    "N_self", "N_intra",
                                               "N_co",   "K_intra", "K_co",    "L_intra", "L_co"};
  for (std::size_t s = 0; s < kFeatureCount; ++s)
    c.expect(kFeatureNames[s] == order[s], "slot " + std::to_string(s) + " is " + std::string(kFeatureNames[s]));
  double worst = 0;
  for (auto [q_len, q_live, a_len, a_live] :
       {std::array<std::size_t, 4>{5, 3, 7, 6}, {4, 4, 9, 2}, {1, 1, 2, 2}, {6, 2, 6, 6}}) {
    auto cfg = testing::small_config();
    cfg.question_max_len = q_len;
    cfg.answer_max_len = a_len;
    DfgnModel m(cfg, 5);
    auto q = testing::random_sentence(rng, q_len, q_live, 6);
    auto a = testing::random_sentence(rng, a_len, a_live, 6);
    PairTrace t;
    m.score(q, a, false, 0, &t);
    const std::string tag = " for q=" + std::to_string(q_len) + " a=" + std::to_string(a_len);
    c.expect(t.question_augmented.words.shape() == Shape{q_len + 10, 6}, "question length" + tag);
    c.expect(t.answer_augmented.words.shape() == Shape{a_len + 10, 6}, "answer length" + tag);
    c.expect(t.question_affinity.shape() == Shape{a_len + 10, q_len + 10}, "second co-attention shape" + tag);
    c.expect(t.question_alignment.weights.shape() == Shape{q_len + 10, a_len + 10}, "alignment weights" + tag);
    c.expect(t.answer_affinity.shape() == Shape{q_len + 10, a_len + 10}, "answer-side affinity" + tag);

    for (const auto& [own, other, aug, w] :
         {std::tuple{&q, &a, &t.question_augmented, "self.q"}, std::tuple{&a, &q, &t.answer_augmented, "self.a"}}) {
      const auto n = own->length();
      auto want = feature_oracle(rows_of(own->words), own->mask, rows_of(other->words), other->mask,
                                 rows_of(m.params().get(w)));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 6; ++k)
          c.expect(aug->words.at(i, k) == own->words.at(i, k), "word rows copied" + tag);
      for (std::size_t s = 0; s < kFeatureCount; ++s) {
        c.expect(aug->mask[n + s], "feature slot masked" + tag);
        for (std::size_t k = 0; k < 6; ++k) {
          const double err = std::abs(aug->words.at(n + s, k) - want[s][k]);
          worst = std::max(worst, err);
          c.expect(err <= 1e-12, std::string(order[s]) + " mismatch " + fmt(err) + tag);
        }
      }
    }
  }
  return c.outcome("lengths q+10/a+10, affinity (a+10)x(q+10), slot oracle max error " + fmt(worst));
}

Outcome pooling_invariants() {
  Checker c;
  Rng rng(41);
  std::size_t checked = 0;
  auto weights_ok = [&](std::span<const double> w, const Mask& mask, const std::string& what) {
    double sum = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double v = w[i];
      c.expect(v >= 0.0, what + " negative weight");
      if (!mask[i]) c.expect(v == 0.0, what + " weight on padding");
      sum += v;
    }
    c.expect(std::abs(sum - 1.0) <= 1e-12, what + " sums to " + fmt(sum));
    ++checked;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6), nq = 1 + rng.below(8), na = 1 + rng.below(8);
    auto q = testing::random_sentence(rng, nq, 1 + rng.below(nq), d);
    auto a = testing::random_sentence(rng, na, 1 + rng.below(na), d);
    auto wq = testing::random_matrix(rng, d, d, 2.0);
    auto wa = testing::random_matrix(rng, d, d, 2.0);
    auto [fq, fa] = generate_features(q, a, wq, wa);
    for (const auto& [f, own, other] : {std::tuple{&fq, &q, &a}, std::tuple{&fa, &a, &q}}) {
      const auto x = rows_of(own->words);
      for (std::size_t s = 0; s < 6; ++s) {
        const auto& w = f->pool_weights[s];
        const std::string name(kFeatureNames[s]);
        weights_ok(w.data(), own->mask, name);
        // Convex hull: the vector is the weighted sum of live words, and each
        // coordinate lies within the live words' range.
        std::vector<double> wv(w.data().begin(), w.data().end());
        auto rebuilt = weighted_sum(wv, x);
        for (std::size_t k = 0; k < d; ++k) {
          double lo = INFINITY, hi = -INFINITY;
          for (std::size_t i = 0; i < own->length(); ++i)
            if (own->mask[i]) {
              lo = std::min(lo, x[i][k]);
              hi = std::max(hi, x[i][k]);
            }
          const double v = f->slots[s].at(k);
          c.expect(std::abs(v - rebuilt[k]) <= 1e-12, name + " is not the weighted sum of its words");
          c.expect(v >= lo - 1e-12 && v <= hi + 1e-12, name + " outside the convex hull");
        }
      }
      // Alignment pooling: every target row is a distribution over live sources.
      auto intra = alignment_pool(affinity(own->words, own->words), own->words, own->mask);
      auto co = alignment_pool(affinity(other->words, own->words), other->words, other->mask);
      for (std::size_t j = 0; j < own->length(); ++j) {
        weights_ok(intra.weights.data().subspan(j * own->length(), own->length()), own->mask,
                   "intra alignment");
        weights_ok(co.weights.data().subspan(j * other->length(), other->length()), other->mask,
                   "co alignment");
      }
    }
  }
  return c.outcome(std::to_string(checked) + " weight vectors checked");
}

Outcome phi_suite() {
  Checker c;
  c.expect(phi(0.3, 0.5) == 0.0, "phi(0.3, 0.5)");
  c.expect(phi(0.5, 0.3) == 0.5, "phi(0.5, 0.3)");
  c.expect(phi(0.4, 0.4) == 0.4, "phi(0.4, 0.4)");

  // Hand-evaluated column: w = [0.7, 0.2, 0.1], t = [0.5, 0.3, 0.2].
  auto kept = phi_filter(Tensor::from({1, 3}, {0.7, 0.2, 0.1}), Tensor::from({1, 3}, {0.5, 0.3, 0.2}));
  c.expect(kept.at(0, 0) == 0.7 && kept.at(0, 1) == 0.0 && kept.at(0, 2) == 0.0, "hand example");

  Rng rng(51);
  double max_mass = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6), ns = 1 + rng.below(9), nt = 1 + rng.below(9);
    auto src = testing::random_sentence(rng, ns, 1 + rng.below(ns), d);
    auto tgt = testing::random_matrix(rng, nt, d, 2.0);
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) eye[k * d + k] = 1.0;
    auto g = second_affinity(src.words, tgt);
    auto g_id = threshold_affinity(src.words, Tensor::from({d, d}, eye), tgt);
    for (std::size_t i = 0; i < g.numel(); ++i) c.expect(g.at(i) == g_id.at(i), "identity threshold affinity");
    auto thresholded = thresholded_align(g, g_id, src.words, src.mask);
    auto plain = alignment_pool(g, src.words, src.mask);
    for (std::size_t i = 0; i < plain.rows.numel(); ++i)
      c.expect(thresholded.rows.at(i) == plain.rows.at(i), "identity threshold changes the output");

    auto w_tilde = testing::random_matrix(rng, d, d, 2.0);
    auto random = thresholded_align(g, threshold_affinity(src.words, w_tilde, tgt), src.words, src.mask);
    for (std::size_t j = 0; j < nt; ++j) {
      double mass = 0, full = 0;
      for (std::size_t i = 0; i < ns; ++i) {
        const double r = random.retained.at(j, i), w = random.weights.at(j, i);
        c.expect(r == 0.0 || r == w, "retained weight is neither kept nor dropped");
        mass += r;
        full += w;
      }
      max_mass = std::max(max_mass, mass);
      c.expect(mass <= full && mass <= 1.0 + 1e-12, "column gains mass: " + fmt(mass));
    }
  }
  return c.outcome("truth table exact, identity threshold bitwise, max retained mass " + fmt(max_mass));
}

// Brute-force metric definitions: rank = 1 + number of items with a higher
// score, or an equal score and a smaller index.
std::vector<std::size_t> brute_ranks(const RankedGroup& g) {
  std::vector<std::size_t> rank(g.size(), 1);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (g.scores[j] > g.scores[i] || (g.scores[j] == g.scores[i] && j < i)) ++rank[i];
  return rank;
}

Outcome metric_oracle() {
  Checker c;
  Rng rng(61);
  for (int trial = 0; trial < 1000; ++trial) {
    RankedGroup g;
    const std::size_t n = 2 + rng.below(19);
    for (std::size_t i = 0; i < n; ++i) {
      g.scores.push_back(static_cast<double>(rng.below(5)));
      g.labels.push_back(rng.uniform() < 0.35 ? 1 : 0);
    }
    g.labels[rng.below(n)] = 1;
    const auto rank = brute_ranks(g);
    double ap = 0, hits = 0;
    std::size_t first = n + 1;
    for (std::size_t k = 1; k <= n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        if (rank[i] == k && g.labels[i] == 1) {
          hits += 1;
          ap += hits / static_cast<double>(k);
          first = std::min(first, k);
        }
    ap /= hits;
    const double p1 = [&] {
      for (std::size_t i = 0; i < n; ++i)
        if (rank[i] == 1) return g.labels[i] == 1 ? 1.0 : 0.0;
      return 0.0;
    }();
    c.expect(average_precision(g) == ap, "AP trial " + std::to_string(trial));
    c.expect(reciprocal_rank(g) == 1.0 / static_cast<double>(first), "RR trial " + std::to_string(trial));
    c.expect(precision_at_1(g) == p1, "P@1 trial " + std::to_string(trial));
  }
  RankedGroup perfect{{0.9, 0.5, 0.4, 0.1}, {1, 1, 0, 0}};
  c.expect(average_precision(perfect) == 1.0 && reciprocal_rank(perfect) == 1.0 &&
               precision_at_1(perfect) == 1.0,
           "perfect ranking");
  RankedGroup five_sixths{{3.0, 2.0, 1.0}, {1, 0, 1}};
  c.expect(average_precision(five_sixths) == (1.0 + 2.0 / 3.0) / 2.0, "5/6 example");
  return c.outcome("1000 random groups exact, perfect = 1, AP example = 5/6");
}

Outcome loss_suite() {
  Checker c;
  const double two = listwise_loss(Tensor::from({2}, {0.0, 0.0}), std::vector<int>{1, 0}).item();
  c.expect(std::abs(two - std::log(2.0)) <= 1e-12, "uniform 1-of-2 loss " + fmt(two));
  c.expect(listwise_loss(Tensor::from({3}, {0.4, 0.4, 0.4}), std::vector<int>{1, 1, 1}).item() == 0.0,
           "p = t gives zero");
  Rng rng(71);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<double> z(n);
    std::vector<int> labels(n);
    for (auto& v : z) v = rng.uniform(-3, 3);
    for (auto& l : labels) l = rng.uniform() < 0.4 ? 1 : 0;
    labels[rng.below(n)] = 1;
    auto logits = Tensor::from({n}, z, true);
    auto loss = listwise_loss(logits, labels);
    c.expect(loss.item() >= 0.0, "negative loss");
    // Oracle: KL(t || softmax(z)) and its gradient p - t.
    double top = *std::max_element(z.begin(), z.end()), norm = 0, kl = 0, pos = 0;
    for (double v : z) norm += std::exp(v - top);
    for (int l : labels) pos += l;
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(z[i] - top) / norm;
      t[i] = labels[i] / pos;
      if (t[i] > 0) kl += t[i] * std::log(t[i] / p[i]);
    }
    c.expect(std::abs(loss.item() - kl) <= 1e-12, "loss differs from the KL oracle");
    bool same = true;
    for (std::size_t i = 0; i < n; ++i) same = same && std::abs(p[i] - t[i]) < 1e-9;
    if (!same) c.expect(loss.item() > 0.0, "p != t but loss is zero");
    backward(loss);
    for (std::size_t i = 0; i < n; ++i)
      c.expect(std::abs(logits.grad()[i] - (p[i] - t[i])) <= 1e-12, "gradient is not p - t");
    logits.zero_grad();
    const double err =
        finite_diff_check([&](const Tensor& x) { return listwise_loss(x, labels); }, logits, 1e-5);
    worst = std::max(worst, err);
    c.expect(err <= 1e-6, "finite-difference error " + fmt(err));
  }
  return c.outcome("ln 2 case exact to 1e-12, gradient p - t, max FD error " + fmt(worst));
}

Outcome overfit_test() {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  testing::TempDir dir;
  auto base = testing::small_config(8);
  base.question_max_len = 4;
  base.answer_max_len = 5;
  base.candidates = 4;
  base.batch_size = 5;
  base.learning_rate = 0.01;
  base.seed = 11;
  auto cfg = testing::write_synthetic_corpus(dir, base, {.questions = 20, .candidates = 4}, 0, 0);
  auto corpus = load_corpus(cfg);
  Trainer trainer(cfg, corpus.table, corpus.train, corpus.pool);
  const auto train_set = prepare_groups(corpus.train, corpus.table, cfg);
  double p1 = 0;
  std::size_t epoch = 0;
  while (epoch < 200) {
    trainer.run_epoch();
    ++epoch;
    p1 = evaluate(trainer.model(), train_set).p_at_1;
    if (p1 == 1.0) break;
  }
  const double secs = std::chrono::duration<double>(clock::now() - start).count();
  Checker c;
  c.expect(p1 == 1.0, "train P@1 " + fmt(p1) + " after 200 epochs");
  c.expect(secs < 600.0, "took " + fmt(secs) + " s");
  return c.outcome("train P@1 = 1 after " + std::to_string(epoch) + " epochs in " + fmt(secs) + " s");
}

std::string data_file(const std::string& rel) {
  const char* root = std::getenv(kDataRootEnv);
  if (!root || !*root) return {};
  auto p = resolve_data_path(rel);
  return std::filesystem::exists(p) ? p : std::string{};
}

Outcome dataset_ingestion() {
  const auto train = data_file("WikiQA/WikiQA-train.tsv"), dev = data_file("WikiQA/WikiQA-dev.tsv"),
             test = data_file("WikiQA/WikiQA-test.tsv");
  auto trec = data_file("TrecQA/clean-test");
  if (trec.empty()) trec = data_file("TrecQA/clean-test.tsv");
  if (train.empty() || dev.empty() || test.empty() || trec.empty())
    return skip(std::string("set ") + kDataRootEnv +
                " to a directory with WikiQA/WikiQA-{train,dev,test}.tsv and TrecQA/clean-test");
  Checker c;
  auto count = [](const std::string& p) {
    auto g = parse_dataset(p, DatasetFormat::kWikiQaTsv);
    return count_answerable(g);
  };
  const auto n_train = count(train), n_test = count(test), n_dev = count(dev);
  c.expect(n_train == 873, "WikiQA train " + std::to_string(n_train));
  c.expect(n_test == 243, "WikiQA test " + std::to_string(n_test));
  c.expect(n_dev == 126, "WikiQA dev " + std::to_string(n_dev));
  const auto n_trec = count_mixed(parse_dataset(trec, DatasetFormat::kTrecQa));
  c.expect(n_trec == 68, "TrecQA clean test " + std::to_string(n_trec));
  return c.outcome("WikiQA 873/243/126, TrecQA clean test 68");
}

// Expected MRR of a random ordering, the score-shuffle baseline.
double shuffle_mrr(std::span<const CandidateGroup> groups) {
  double total = 0;
  std::size_t counted = 0;
  for (const auto& g : groups) {
    const std::size_t n = g.candidates.size(), p = g.positives();
    if (p == 0) continue;
    double e = 0, none_yet = 1.0;
    for (std::size_t k = 1; k <= n - p + 1; ++k) {
      const double hit = static_cast<double>(p) / static_cast<double>(n - k + 1);
      e += none_yet * hit / static_cast<double>(k);
      none_yet *= 1.0 - hit;
    }
    total += e;
    ++counted;
  }
  return total / static_cast<double>(counted);
}

double train_model_mrr(const RunConfig& cfg, const Corpus& corpus) {
  auto result = train(cfg, corpus, &std::cerr);
  return evaluate(result.model, prepare_groups(corpus.dev, corpus.table, cfg)).mrr;
}

Outcome trend_check() {
  const char* run = std::getenv("DFGN_RUN_TREND");
  const auto emb_rel = std::getenv("DFGN_EMBEDDINGS") ? std::string(std::getenv("DFGN_EMBEDDINGS"))
                                                      : std::string("glove.840B.300d.txt");
  const auto train = data_file("WikiQA/WikiQA-train.tsv"), dev = data_file("WikiQA/WikiQA-dev.tsv");
  const auto emb = data_file(emb_rel);
  if (!run || std::string(run) != "1" || train.empty() || dev.empty() || emb.empty())
    return skip("long-running; needs DFGN_RUN_TREND=1 plus WikiQA and " + emb_rel + " under " + kDataRootEnv);
  RunConfig cfg;
  cfg.format = "wikiqa_tsv";
  cfg.train_path = train;
  cfg.dev_path = dev;
  cfg.embedding_path = emb;
  cfg.epochs = 10;
  cfg.checkpoint_path = "";
  auto corpus = load_corpus(cfg);
  const double baseline = shuffle_mrr(corpus.dev);
  auto full = train_model_mrr(cfg, corpus);
  auto reduced_cfg = with_preset(cfg, find_preset("no_all_features"));
  auto reduced = train_model_mrr(reduced_cfg, corpus);
  Checker c;
  c.expect(full >= baseline + 0.15, "full dev MRR " + fmt(full) + " vs shuffle " + fmt(baseline));
  c.expect(full > reduced, "full dev MRR " + fmt(full) + " vs reduced " + fmt(reduced));
  return c.outcome("dev MRR full " + fmt(full) + ", reduced " + fmt(reduced) + ", shuffle " + fmt(baseline));
}

Outcome ablation_harness() {
  testing::TempDir dir;
  auto base = testing::small_config(8);
  base.epochs = 1;
  auto cfg = testing::write_synthetic_corpus(dir, base, {.questions = 50, .candidates = 5}, 0, 20);
  auto corpus = load_corpus(cfg);
  Checker c;
  c.expect(corpus.train.size() == 50, "subset has " + std::to_string(corpus.train.size()) + " questions");
  std::vector<std::string> names;
  for (const auto& p : presets()) names.emplace_back(p.name);
  auto rows = run_ablation(cfg, corpus, names);
  const auto table = format_ablation_table(rows);
  std::cout << table;
  c.expect(rows.size() == presets().size(), "row count");
  for (const auto& p : presets()) c.expect(table.find(p.label) != std::string::npos, std::string("missing ") + p.label);
  for (const auto& r : rows)
    c.expect(std::isfinite(r.map) && std::isfinite(r.mrr) && r.parameters > 0, "bad row " + r.preset);
  return c.outcome("full model and 7 ablations trained one epoch on 50 questions");
}

int run_cli(const std::string& args) {
  const auto cmd = std::string(DFGN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  testing::TempDir dir;
  auto cfg = testing::write_synthetic_corpus(dir, testing::small_config(8), {.questions = 12}, 4, 0);
  cfg.epochs = 2;
  cfg.dropout = 0.2;
  testing::write_file(dir.file("run.cfg"), to_text(cfg));
  Checker c;
  for (const char* name : {"one.ckpt", "two.ckpt"})
    c.expect(run_cli("train --config " + dir.file("run.cfg") + " --seed 77 --checkpoint " + dir.file(name)) == 0,
             std::string("train run for ") + name);
  const auto one = testing::read_file(dir.file("one.ckpt")), two = testing::read_file(dir.file("two.ckpt"));
  c.expect(!one.empty(), "no checkpoint written");
  c.expect(one == two, "checkpoints differ");
  c.expect(run_cli("train --config " + dir.file("run.cfg") + " --seed 78 --checkpoint " + dir.file("three.ckpt")) == 0,
           "third run");
  c.expect(testing::read_file(dir.file("three.ckpt")) != one, "a different seed gives the same checkpoint");
  return c.outcome("two seeded CLI training runs give identical " + std::to_string(one.size()) + "-byte checkpoints");
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"gradient_suite", gradient_suite},       {"shape_suite", shape_suite},
      {"pooling_invariants", pooling_invariants}, {"phi_suite", phi_suite},
      {"metric_oracle", metric_oracle},         {"loss_suite", loss_suite},
      {"overfit_test", overfit_test},           {"dataset_ingestion", dataset_ingestion},
      {"trend_check", trend_check},             {"ablation_harness", ablation_harness},
      {"determinism", determinism},
  };
  return all;
}

}  // namespace
}  // namespace dfgn::acceptance

int main(int argc, char** argv) {
  using namespace dfgn::acceptance;
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    const bool known = std::any_of(criteria().begin(), criteria().end(),
                                   [&](const Criterion& c) { return w == c.name; });
    if (!known) {
      std::cerr << "unknown criterion '" << w << "'; known:";
      for (const auto& c : criteria()) std::cerr << ' ' << c.name;
      std::cerr << '\n';
      return 2;
    }
  }
  std::size_t ran = 0, failed = 0, skipped = 0;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.name) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("threw: ") + e.what());
    }
    ++ran;
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    failed += o.status == Status::kFail;
    skipped += o.status == Status::kSkip;
    std::cout << tag << ' ' << c.name << ": " << o.detail << std::endl;
  }
  if (failed) return 1;
  return ran > 0 && skipped == ran ? 77 : 0;
}
