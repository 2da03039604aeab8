#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "astrosnn/common.hpp"

namespace astrosnn {

/// Dense input-to-output weights, stored row-major with one row per input
/// (so an input spike touches one contiguous row), plus a persistent
/// stuck-at-zero fault mask.
///
/// Invariants: faulty entries hold exactly 0. Healthy entries lie in
/// [0, w_max] except transiently after normalize_weights(), which may scale
/// above w_max; `in_bounds()` reports whether that has happened since the
/// last full clamp.
class SynapseMatrix {
 public:
  SynapseMatrix() = default;
  SynapseMatrix(std::size_t n_inputs, std::size_t n_neurons, double w_max = 1.0)
      : n_inputs_(n_inputs),
        n_neurons_(n_neurons),
        w_max_(w_max),
        w_(n_inputs * n_neurons, 0.0),
        faulty_(n_inputs * n_neurons, 0) {
    require(w_max > 0.0, "SynapseMatrix: w_max must be positive");
  }

  std::size_t n_inputs() const noexcept { return n_inputs_; }
  std::size_t n_neurons() const noexcept { return n_neurons_; }
  std::size_t size() const noexcept { return w_.size(); }
  double w_max() const noexcept { return w_max_; }

  double operator()(std::size_t input, std::size_t neuron) const noexcept {
    return w_[input * n_neurons_ + neuron];
  }
  bool is_faulty(std::size_t input, std::size_t neuron) const noexcept {
    return faulty_[input * n_neurons_ + neuron] != 0;
  }

  /// Sets a healthy weight; writes to faulty entries are ignored.
  void set(std::size_t input, std::size_t neuron, double value) noexcept {
    const auto k = input * n_neurons_ + neuron;
    if (!faulty_[k]) w_[k] = value;
  }

  /// Marks an entry stuck-at-zero. Irreversible.
  void mark_faulty(std::size_t input, std::size_t neuron) noexcept {
    const auto k = input * n_neurons_ + neuron;
    faulty_[k] = 1;
    w_[k] = 0.0;
  }

  std::span<const double> row(std::size_t input) const noexcept {
    return {w_.data() + input * n_neurons_, n_neurons_};
  }
  std::span<double> row(std::size_t input) noexcept { return {w_.data() + input * n_neurons_, n_neurons_}; }
  std::span<const std::uint8_t> fault_row(std::size_t input) const noexcept {
    return {faulty_.data() + input * n_neurons_, n_neurons_};
  }

  std::span<const double> data() const noexcept { return w_; }
  std::span<double> data() noexcept { return w_; }
  std::span<const std::uint8_t> fault_mask() const noexcept { return faulty_; }

  std::size_t fault_count() const noexcept {
    return static_cast<std::size_t>(std::count(faulty_.begin(), faulty_.end(), std::uint8_t{1}));
  }
  bool has_faults() const noexcept { return std::find(faulty_.begin(), faulty_.end(), 1) != faulty_.end(); }

  bool in_bounds() const noexcept { return in_bounds_; }
  void mark_out_of_bounds() noexcept { in_bounds_ = false; }

  /// Clamps every healthy entry into [0, w_max].
  void clamp_all() noexcept {
    for (auto& w : w_) w = std::clamp(w, 0.0, w_max_);
    in_bounds_ = true;
  }

  /// Sum of column `neuron` (faulty entries contribute 0).
  double column_sum(std::size_t neuron) const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < n_inputs_; ++i) s += w_[i * n_neurons_ + neuron];
    return s;
  }

  /// Replaces the whole fault mask (used when restoring checkpoints).
  void assign(std::vector<double> weights, std::vector<std::uint8_t> faulty) {
    require(weights.size() == n_inputs_ * n_neurons_ && faulty.size() == weights.size(),
            "SynapseMatrix::assign: size mismatch");
    w_ = std::move(weights);
    faulty_ = std::move(faulty);
    for (std::size_t k = 0; k < w_.size(); ++k)
      if (faulty_[k]) w_[k] = 0.0;
    in_bounds_ = std::all_of(w_.begin(), w_.end(), [&](double w) { return w >= 0.0 && w <= w_max_; });
  }

  friend bool operator==(const SynapseMatrix& a, const SynapseMatrix& b) {
    return a.n_inputs_ == b.n_inputs_ && a.n_neurons_ == b.n_neurons_ && a.w_max_ == b.w_max_ && a.w_ == b.w_ &&
           a.faulty_ == b.faulty_;
  }

 private:
  std::size_t n_inputs_ = 0;
  std::size_t n_neurons_ = 0;
  double w_max_ = 1.0;
  std::vector<double> w_;
  std::vector<std::uint8_t> faulty_;
  bool in_bounds_ = true;
};

}  // namespace astrosnn
