#pragma once

// RunConfig: every hyperparameter of a run, stored as flat `key = value`
// text. Lines starting with '#' are comments. Unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dfgn/errors.hpp"
#include "dfgn/random.hpp"

namespace dfgn {

struct AblationSwitches {
  bool no_encoder = false;
  bool no_compare = false;
  bool no_second_coattention = false;
  bool no_intra_features = false;
  bool no_self_features = false;
  bool no_co_features = false;
  bool no_all_features = false;

  bool operator==(const AblationSwitches&) const = default;
};

struct RunConfig {
  std::string format = "wikiqa_tsv";
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string embedding_path;
  std::size_t embedding_dim = 300;

  std::size_t question_max_len = 12;
  std::size_t answer_max_len = 50;
  std::size_t candidates = 15;
  std::size_t batch_size = 11;

  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double l2_lambda = 1e-5;
  double clip_norm = 5.0;
  double dropout = 0.1;

  std::vector<std::size_t> conv_windows{1, 2, 3, 4, 5};
  std::size_t conv_filters = 50;
  std::size_t mlp_hidden = 128;

  AblationSwitches ablation;
  bool renormalize_retained = false;
  bool threshold_straight_through = false;
  bool scalar_branch_scores = false;

  std::uint64_t seed = 1234;
  std::size_t epochs = 20;
  std::string checkpoint_path = "dfgn.ckpt";
  std::string log_path;
  std::string report_path;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::uint64_t parse_size(const std::string& key, const std::string& v) {
  std::uint64_t n = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return n;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
}

// Shortest text that reads back to the same double.
inline std::string fmt_real(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

template <typename Visitor>
void visit_fields(RunConfig& c, Visitor&& v) {
  v("format", c.format);
  v("train_path", c.train_path);
  v("dev_path", c.dev_path);
  v("test_path", c.test_path);
  v("embedding_path", c.embedding_path);
  v("embedding_dim", c.embedding_dim);
  v("question_max_len", c.question_max_len);
  v("answer_max_len", c.answer_max_len);
  v("candidates", c.candidates);
  v("batch_size", c.batch_size);
  v("learning_rate", c.learning_rate);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("adam_epsilon", c.adam_epsilon);
  v("l2_lambda", c.l2_lambda);
  v("clip_norm", c.clip_norm);
  v("dropout", c.dropout);
  v("conv_windows", c.conv_windows);
  v("conv_filters", c.conv_filters);
  v("mlp_hidden", c.mlp_hidden);
  v("no_encoder", c.ablation.no_encoder);
  v("no_compare", c.ablation.no_compare);
  v("no_second_coattention", c.ablation.no_second_coattention);
  v("no_intra_features", c.ablation.no_intra_features);
  v("no_self_features", c.ablation.no_self_features);
  v("no_co_features", c.ablation.no_co_features);
  v("no_all_features", c.ablation.no_all_features);
  v("renormalize_retained", c.renormalize_retained);
  v("threshold_straight_through", c.threshold_straight_through);
  v("scalar_branch_scores", c.scalar_branch_scores);
  v("seed", c.seed);
  v("epochs", c.epochs);
  v("checkpoint_path", c.checkpoint_path);
  v("log_path", c.log_path);
  v("report_path", c.report_path);
}

struct FieldWriter {
  std::ostringstream& os;
  void operator()(const char* k, const std::string& v) { os << k << " = " << v << '\n'; }
  template <typename T>
    requires(std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
  void operator()(const char* k, T v) {
    os << k << " = " << v << '\n';
  }
  void operator()(const char* k, double v) { os << k << " = " << fmt_real(v) << '\n'; }
  void operator()(const char* k, bool v) { os << k << " = " << (v ? "true" : "false") << '\n'; }
  void operator()(const char* k, const std::vector<std::size_t>& v) {
    os << k << " = ";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << '\n';
  }
};

}  // namespace detail

inline std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  auto copy = c;
  detail::visit_fields(copy, detail::FieldWriter{os});
  return os.str();
}

// Checks ranges and cross-field constraints.
inline void validate(const RunConfig& c) {
  if (c.format != "wikiqa_tsv" && c.format != "trecqa" && c.format != "insuranceqa_v1")
    throw ConfigError("format: unknown dataset format '" + c.format + "'");
  if (c.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (c.question_max_len == 0 || c.answer_max_len == 0)
    throw ConfigError("question_max_len and answer_max_len must be positive");
  if (c.candidates < 1) throw ConfigError("candidates must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(c.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (!(c.adam_epsilon > 0)) throw ConfigError("adam_epsilon must be positive");
  if (c.l2_lambda < 0) throw ConfigError("l2_lambda must be non-negative");
  if (!(c.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(c.dropout >= 0 && c.dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.conv_windows.empty()) throw ConfigError("conv_windows must list at least one width");
  for (auto w : c.conv_windows)
    if (w == 0) throw ConfigError("conv_windows entries must be positive");
  if (c.conv_filters == 0) throw ConfigError("conv_filters must be positive");
  if (c.mlp_hidden == 0) throw ConfigError("mlp_hidden must be positive");
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  RunConfig c;
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, n, "expected 'key = value'");
    auto key = detail::trim(t.substr(0, eq));
    auto value = detail::trim(t.substr(eq + 1));
    if (!kv.emplace(key, value).second) throw ParseError(source, n, "duplicate key '" + key + "'");
  }
  detail::visit_fields(c, [&kv](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    const std::string& v = it->second;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) {
      field = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      field = detail::parse_bool(key, v);
    } else if constexpr (std::is_same_v<T, double>) {
      field = detail::parse_real(key, v);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      field.clear();
      std::istringstream parts(v);
      std::string p;
      while (std::getline(parts, p, ',')) field.push_back(detail::parse_size(key, detail::trim(p)));
    } else {
      field = static_cast<T>(detail::parse_size(key, v));
    }
    kv.erase(it);
  });
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// Hash over the keys that shape the parameter set and the forward pass. Paths,
// epochs, seed and optimizer settings are excluded so a checkpoint can be
// evaluated with a different data or output layout.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << "embedding_dim=" << c.embedding_dim << ";q=" << c.question_max_len
     << ";a=" << c.answer_max_len << ";filters=" << c.conv_filters << ";hidden=" << c.mlp_hidden
     << ";windows=";
  for (auto w : c.conv_windows) os << w << ',';
  const auto& s = c.ablation;
  os << ";abl=" << s.no_encoder << s.no_compare << s.no_second_coattention << s.no_intra_features
     << s.no_self_features << s.no_co_features << s.no_all_features
     << ";renorm=" << c.renormalize_retained << ";ste=" << c.threshold_straight_through
     << ";scalar=" << c.scalar_branch_scores;
  return fnv1a(os.str());
}

// ---------------------------------------------------------------------------
// Named ablation presets

struct Preset {
  const char* name;
  const char* label;
  AblationSwitches switches;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"full", "Full Model", {}},
      {"no_encoder", "(1) w/o Encoder", {.no_encoder = true}},
      {"no_compare", "(2) w/o Compare", {.no_compare = true}},
      {"no_second_coattention", "(3) w/o Second Co-attention", {.no_second_coattention = true}},
      {"no_intra_features", "(4) w/o Intra-attention features", {.no_intra_features = true}},
      {"no_self_features", "(5) w/o Self-attention features", {.no_self_features = true}},
      {"no_co_features", "(6) w/o Co-attention features", {.no_co_features = true}},
      {"no_all_features", "(7) w/o All sentence features", {.no_all_features = true}},
  };
  return all;
}

inline const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (name == p.name) return p;
  throw ConfigError("unknown ablation preset '" + name + "'");
}

}  // namespace dfgn
