#pragma once

// Checkpoint file, version 1. All integers are little-endian u64 unless noted,
// reals are IEEE-754 binary64.
//
//   magic        8 bytes  "DFGNCKPT"
//   version      u32      1
//   config_hash  u64      config_hash() of the run
//   config_len   u64      followed by to_text(config), output paths cleared
//   step         u64      optimizer steps taken
//   epoch        u64      epoch the parameters come from (1-based, 0 = untrained)
//   count        u64      number of tensors, then per tensor:
//     name_len u64, name bytes, rank u64, extents u64 x rank,
//     values f64 x n, first moment f64 x n, second moment f64 x n
//
// Tensors appear in ParamStore order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dfgn/optimizer.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

namespace dfgn {

inline constexpr char kCheckpointMagic[8] = {'D', 'F', 'G', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::vector<CheckpointTensor> tensors;
};

inline Checkpoint make_checkpoint(const RunConfig& cfg, const ParamStore& params,
                                  const OptimizerState& st, std::uint64_t epoch) {
  Checkpoint c;
  c.config_hash = config_hash(cfg);
  // Output locations are left out so identical runs give identical files.
  RunConfig stored = cfg;
  stored.checkpoint_path.clear();
  stored.log_path.clear();
  stored.report_path.clear();
  c.config_text = to_text(stored);
  c.step = st.step;
  c.epoch = epoch;
  std::size_t k = 0;
  for (const auto& [name, t] : params) {
    c.tensors.push_back({name, t.shape(), {t.data().begin(), t.data().end()},
                         st.first_moment.at(k), st.second_moment.at(k)});
    ++k;
  }
  return c;
}

namespace detail {

struct Writer {
  std::ofstream& out;
  void u64(std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void u32(std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void bytes(const std::string& s) {
    u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void reals(const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
};

struct Reader {
  std::ifstream& in;
  const std::string& path;
  void need(bool ok) const {
    if (!ok) throw IoError("truncated or corrupt checkpoint " + path);
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    need(static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v)));
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    need(static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v)));
    return v;
  }
  std::string bytes() {
    const auto n = u64();
    need(n < (1ULL << 32));
    std::string s(n, '\0');
    need(static_cast<bool>(in.read(s.data(), static_cast<std::streamsize>(n))));
    return s;
  }
  std::vector<double> reals(std::size_t n) {
    std::vector<double> v(n);
    need(static_cast<bool>(in.read(reinterpret_cast<char*>(v.data()),
                                   static_cast<std::streamsize>(n * sizeof(double)))));
    return v;
  }
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  detail::Writer w{out};
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.config_hash);
  w.bytes(c.config_text);
  w.u64(c.step);
  w.u64(c.epoch);
  w.u64(c.tensors.size());
  for (const auto& t : c.tensors) {
    w.bytes(t.name);
    w.u64(t.shape.size());
    for (auto e : t.shape) w.u64(e);
    w.reals(t.values);
    w.reals(t.first_moment);
    w.reals(t.second_moment);
  }
  if (!out) throw IoError("failed while writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  detail::Reader r{in, path};
  char magic[8];
  r.need(static_cast<bool>(in.read(magic, sizeof magic)));
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw IoError(path + " is not a checkpoint file");
  if (auto v = r.u32(); v != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.config_hash = r.u64();
  c.config_text = r.bytes();
  c.step = r.u64();
  c.epoch = r.u64();
  const auto count = r.u64();
  r.need(count < (1ULL << 20));
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.bytes();
    const auto rank = r.u64();
    r.need(rank > 0 && rank < 8);
    for (std::uint64_t k = 0; k < rank; ++k) t.shape.push_back(r.u64());
    const auto n = shape_numel(t.shape);
    r.need(n > 0 && n < (1ULL << 32));
    t.values = r.reals(n);
    t.first_moment = r.reals(n);
    t.second_moment = r.reals(n);
    c.tensors.push_back(std::move(t));
  }
  return c;
}

// Copies checkpoint values into `params` (and moments into `st` when given).
// Names and shapes must match exactly.
inline void restore(const Checkpoint& c, ParamStore& params, OptimizerState* st = nullptr) {
  if (c.tensors.size() != params.size())
    throw ContractError("checkpoint holds " + std::to_string(c.tensors.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    const auto& src = c.tensors[k];
    if (src.name != name || src.shape != t.shape())
      throw ContractError("checkpoint tensor " + src.name + shape_str(src.shape) +
                          " does not match model tensor " + name + shape_str(t.shape()));
    std::copy(src.values.begin(), src.values.end(), t.mutable_data().begin());
    if (st) {
      st->first_moment.at(k) = src.first_moment;
      st->second_moment.at(k) = src.second_moment;
    }
    ++k;
  }
  if (st) st->step = c.step;
}

}  // namespace dfgn
