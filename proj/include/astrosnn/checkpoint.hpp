#pragma once

// Binary checkpoint. All numerics little-endian, fixed width:
//
//   "ASNNCKPT"  u8 version
//   u32 len, config text
//   u32 n_inputs, u32 n_neurons, f64 w_max
//   f64 weights[n_inputs * n_neurons]          row-major, rows = inputs
//   u8  fault bits[ceil(n_inputs*n_neurons/8)] LSB-first
//   f64 theta[n_neurons]
//   u8  has_assignment
//     u8 class[n_neurons], f64 response[n_neurons * 10]
//   u64 seed, u64 rng_cursor
//   u32 n_metrics, { u32 len, key, f64 value }*

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "astrosnn/config.hpp"
#include "astrosnn/experiment.hpp"
#include "astrosnn/idx.hpp"
#include "astrosnn/network.hpp"

namespace astrosnn {

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  SynapseMatrix weights;
  std::vector<double> theta;
  std::optional<ClassAssignment> assignment;
  std::uint64_t seed = 0;
  std::uint64_t rng_cursor = 0;  ///< training samples consumed so far
  std::vector<std::pair<std::string, double>> metrics;

  std::optional<double> metric(const std::string& key) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return v;
    return std::nullopt;
  }
  void set_metric(const std::string& key, double v) {
    for (auto& [k, x] : metrics)
      if (k == key) {
        x = v;
        return;
      }
    metrics.emplace_back(key, v);
  }
};

namespace ckpt_detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size())
      throw ParseError("checkpoint: truncated at byte offset " + std::to_string(pos_), pos_);
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  ckpt_detail::Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u8(kCheckpointVersion);
  auto cfg = c.config;
  cfg.out_dir = RunConfig{}.out_dir;  // where it was written is not part of the state
  w.str(config_to_string(cfg));
  const auto n_in = c.weights.n_inputs();
  const auto n_out = c.weights.n_neurons();
  require(c.theta.size() == n_out, "checkpoint: theta size does not match weight matrix");
  w.u32(static_cast<std::uint32_t>(n_in));
  w.u32(static_cast<std::uint32_t>(n_out));
  w.f64(c.weights.w_max());
  for (double x : c.weights.data()) w.f64(x);
  const auto mask = c.weights.fault_mask();
  for (std::size_t b = 0; b < (mask.size() + 7) / 8; ++b) {
    std::uint8_t byte = 0;
    for (std::size_t k = 0; k < 8 && b * 8 + k < mask.size(); ++k)
      if (mask[b * 8 + k]) byte |= static_cast<std::uint8_t>(1u << k);
    w.u8(byte);
  }
  for (double t : c.theta) w.f64(t);
  w.u8(c.assignment ? 1 : 0);
  if (c.assignment) {
    require(c.assignment->n_neurons() == n_out && c.assignment->response.size() == n_out * kNumClasses,
            "checkpoint: assignment size does not match weight matrix");
    for (auto k : c.assignment->neuron_class) w.u8(k);
    for (double r : c.assignment->response) w.f64(r);
  }
  w.u64(c.seed);
  w.u64(c.rng_cursor);
  w.u32(static_cast<std::uint32_t>(c.metrics.size()));
  for (const auto& [k, v] : c.metrics) {
    w.str(k);
    w.f64(v);
  }
  return w.take();
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ckpt_detail::Reader r(bytes);
  r.need(sizeof kCheckpointMagic);
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw ParseError("checkpoint: bad magic at byte offset 0", 0);
  for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) r.u8();
  const auto version = r.u8();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) + " at byte offset 8", 8);
  Checkpoint c;
  const auto cfg_offset = r.pos();
  try {
    c.config = config_from_string(r.str(), "checkpoint config");
  } catch (const ValidationError& e) {
    throw ParseError(std::string("checkpoint: embedded config invalid: ") + e.what(), cfg_offset);
  }
  const std::size_t n_in = r.u32();
  const std::size_t n_out = r.u32();
  const double w_max = r.f64();
  if (n_in == 0 || n_out == 0 || !(w_max > 0.0))
    throw ParseError("checkpoint: invalid matrix header at byte offset " + std::to_string(r.pos() - 16), r.pos());
  const std::size_t n = n_in * n_out;
  r.need(n * 8);
  std::vector<double> w(n);
  for (auto& x : w) x = r.f64();
  std::vector<std::uint8_t> mask(n, 0);
  r.need((n + 7) / 8);
  for (std::size_t b = 0; b < (n + 7) / 8; ++b) {
    const auto byte = r.u8();
    for (std::size_t k = 0; k < 8 && b * 8 + k < n; ++k) mask[b * 8 + k] = (byte >> k) & 1u;
  }
  c.weights = SynapseMatrix(n_in, n_out, w_max);
  c.weights.assign(std::move(w), std::move(mask));
  c.theta.resize(n_out);
  for (auto& t : c.theta) t = r.f64();
  const auto has_assignment = r.u8();
  if (has_assignment > 1) throw ParseError("checkpoint: bad assignment flag at byte offset " + std::to_string(r.pos() - 1), r.pos() - 1);
  if (has_assignment) {
    ClassAssignment a;
    a.neuron_class.resize(n_out);
    for (auto& k : a.neuron_class) {
      k = r.u8();
      if (k >= kNumClasses)
        throw ParseError("checkpoint: bad class label at byte offset " + std::to_string(r.pos() - 1), r.pos() - 1);
    }
    a.response.resize(n_out * kNumClasses);
    for (auto& x : a.response) x = r.f64();
    c.assignment = std::move(a);
  }
  c.seed = r.u64();
  c.rng_cursor = r.u64();
  const auto n_metrics = r.u32();
  for (std::uint32_t i = 0; i < n_metrics; ++i) {
    auto k = r.str();
    const double v = r.f64();
    c.metrics.emplace_back(std::move(k), v);
  }
  if (!r.done())
    throw ParseError("checkpoint: trailing bytes at byte offset " + std::to_string(r.pos()), r.pos());
  if (c.config.exp.net.n_neurons != n_out)
    throw ParseError("checkpoint: config n_neurons disagrees with weight matrix", 0);
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_bytes(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

/// Captures a network's learnt state.
inline Checkpoint make_checkpoint(const RunConfig& cfg, const Network& net, std::optional<ClassAssignment> a) {
  Checkpoint c;
  c.config = cfg;
  c.weights = net.weights();
  c.theta = net.state().theta;
  c.assignment = std::move(a);
  c.seed = cfg.exp.seed;
  return c;
}

/// Rebuilds a network from a checkpoint, using `cfg` for the dynamics.
inline Network restore_network(const Checkpoint& c, const RunConfig& cfg) {
  NetworkConfig nc = cfg.exp.net;
  nc.n_inputs = c.weights.n_inputs();
  nc.n_neurons = c.weights.n_neurons();
  nc.w_max = c.weights.w_max();
  Network net(nc);
  net.weights() = c.weights;
  net.state().theta = c.theta;
  return net;
}

}  // namespace astrosnn
