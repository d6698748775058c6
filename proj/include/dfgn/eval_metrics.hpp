#pragma once

// Ranking metrics over candidate groups: average precision, reciprocal rank,
// precision at one, their means, and a breakdown by question word.

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "dfgn/errors.hpp"

namespace dfgn {

// Candidates ranked by descending score; equal scores keep input order.
struct RankedGroup {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  }

  // Candidate indices from best to worst.
  std::vector<std::size_t> order() const {
    if (scores.size() != labels.size())
      throw DimensionError("ranked group has " + std::to_string(scores.size()) + " scores and " +
                           std::to_string(labels.size()) + " labels");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [this](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
  }
};

namespace detail {
inline void require_positive(const RankedGroup& g) {
  if (g.size() == 0) throw ContractError("ranked group is empty");
  if (g.positives() == 0) throw ContractError("ranked group has no positive candidate");
}
}  // namespace detail

inline double average_precision(const RankedGroup& g) {
  detail::require_positive(g);
  const auto idx = g.order();
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (g.labels[idx[r]] != 1) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return total / static_cast<double>(hits);
}

inline double reciprocal_rank(const RankedGroup& g) {
  detail::require_positive(g);
  const auto idx = g.order();
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (g.labels[idx[r]] == 1) return 1.0 / static_cast<double>(r + 1);
  return 0.0;
}

inline double precision_at_1(const RankedGroup& g) {
  detail::require_positive(g);
  return g.labels[g.order().front()] == 1 ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Question types

inline constexpr std::array<const char*, 6> kQuestionTypes = {"what", "how",  "where",
                                                              "who",  "when", "other"};

// Bucket of a tokenized question: its leading interrogative, else "other".
inline std::string question_type(std::span<const std::string> tokens) {
  if (!tokens.empty())
    for (std::size_t i = 0; i + 1 < kQuestionTypes.size(); ++i)
      if (tokens.front() == kQuestionTypes[i]) return kQuestionTypes[i];
  return "other";
}

struct TypeBucket {
  std::string type;
  std::size_t count = 0;
  double share = 0.0;
  double mrr = 0.0;
};

inline std::vector<TypeBucket> question_type_report(std::span<const std::string> types,
                                                    std::span<const double> rr) {
  if (types.size() != rr.size())
    throw DimensionError("question_type_report: " + std::to_string(types.size()) + " types, " +
                         std::to_string(rr.size()) + " reciprocal ranks");
  std::vector<TypeBucket> out;
  for (auto* t : kQuestionTypes) out.push_back({t});
  for (std::size_t i = 0; i < types.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(), [&](const TypeBucket& b) { return b.type == types[i]; });
    if (it == out.end()) it = out.end() - 1;
    it->count += 1;
    it->mrr += rr[i];
  }
  for (auto& b : out) {
    if (b.count) b.mrr /= static_cast<double>(b.count);
    b.share = types.empty() ? 0.0 : static_cast<double>(b.count) / static_cast<double>(types.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct QuestionResult {
  std::string id;
  std::string type;
  std::size_t candidates = 0;
  std::size_t positives = 0;
  double ap = 0.0;
  double rr = 0.0;
  double p_at_1 = 0.0;
};

struct EvalReport {
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  std::size_t questions = 0;         // all questions seen
  std::size_t evaluated = 0;         // questions with >= 1 positive
  std::size_t excluded_no_positive = 0;
  std::vector<TypeBucket> by_type;
  std::vector<QuestionResult> details;
};

struct ScoredQuestion {
  std::string id;
  std::vector<std::string> question_tokens;
  RankedGroup group;
};

// Means over questions with at least one positive; the rest are counted as
// excluded.
inline EvalReport make_report(std::span<const ScoredQuestion> questions) {
  EvalReport r;
  r.questions = questions.size();
  std::vector<std::string> types;
  std::vector<double> rrs;
  for (const auto& q : questions) {
    if (q.group.positives() == 0) {
      ++r.excluded_no_positive;
      continue;
    }
    QuestionResult d;
    d.id = q.id;
    d.type = question_type(q.question_tokens);
    d.candidates = q.group.size();
    d.positives = q.group.positives();
    d.ap = average_precision(q.group);
    d.rr = reciprocal_rank(q.group);
    d.p_at_1 = precision_at_1(q.group);
    r.map += d.ap;
    r.mrr += d.rr;
    r.p_at_1 += d.p_at_1;
    types.push_back(d.type);
    rrs.push_back(d.rr);
    r.details.push_back(std::move(d));
  }
  r.evaluated = r.details.size();
  if (r.evaluated) {
    const auto n = static_cast<double>(r.evaluated);
    r.map /= n;
    r.mrr /= n;
    r.p_at_1 /= n;
  }
  r.by_type = question_type_report(types, rrs);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["map"] = r.map;
  j["mrr"] = r.mrr;
  j["p_at_1"] = r.p_at_1;
  j["questions"] = r.questions;
  j["evaluated"] = r.evaluated;
  j["excluded_no_positive"] = r.excluded_no_positive;
  j["by_type"] = nlohmann::json::array();
  for (const auto& b : r.by_type)
    j["by_type"].push_back({{"type", b.type}, {"count", b.count}, {"share", b.share}, {"mrr", b.mrr}});
  j["details"] = nlohmann::json::array();
  for (const auto& d : r.details)
    j["details"].push_back({{"id", d.id},
                            {"type", d.type},
                            {"candidates", d.candidates},
                            {"positives", d.positives},
                            {"ap", d.ap},
                            {"rr", d.rr},
                            {"p_at_1", d.p_at_1}});
  return j;
}

}  // namespace dfgn
