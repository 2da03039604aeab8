#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/encoding.hpp"
#include "astrosnn/lif.hpp"
#include "astrosnn/plasticity.hpp"
#include "astrosnn/synapses.hpp"

namespace astrosnn {

struct NetworkConfig {
  std::size_t n_inputs = kImagePixels;
  std::size_t n_neurons = 225;
  LifParams lif;
  InhibitionConfig inhibition;
  PlasticityParams plasticity;
  double tau_trace = 20.0;  ///< ms
  double w_max = 1.0;
  double init_w_max = 0.3;  ///< initial weights are uniform on [0, init_w_max]
  /// Multiplier on the summed synaptic drive before it enters the membrane
  /// equation. At tau_mem/dt one unit of weight moves v by 1 mV per spike.
  double synaptic_gain = 100.0;

  void validate() const {
    if (n_inputs == 0) throw ValidationError("network.n_inputs must be > 0");
    if (n_neurons == 0) throw ValidationError("run.n_neurons must be > 0");
    lif.validate();
    inhibition.validate();
    plasticity.validate();
    if (!(tau_trace > 0.0)) throw ValidationError("network.tau_trace must be > 0");
    if (!(w_max > 0.0)) throw ValidationError("network.w_max must be > 0");
    if (!(init_w_max >= 0.0 && init_w_max <= w_max))
      throw ValidationError("network.init_w_max must lie in [0, w_max]");
    if (!(synaptic_gain > 0.0)) throw ValidationError("network.synaptic_gain must be > 0");
  }
};

/// What a single presentation produced.
struct Presentation {
  std::vector<std::uint32_t> spike_counts;
  std::vector<double> cumulative_current;  ///< summed feedforward+lateral drive
  std::size_t total_spikes = 0;
};

enum class PresentMode { kLearn, kInfer };

/// Fully connected input layer feeding a layer of adaptive-threshold LIF
/// neurons with lateral inhibition.
class Network {
 public:
  Network() = default;
  explicit Network(const NetworkConfig& cfg)
      : cfg_(cfg),
        weights_(cfg.n_inputs, cfg.n_neurons, cfg.w_max),
        state_(cfg.n_neurons, cfg.lif),
        traces_(cfg.n_inputs, cfg.n_neurons, cfg.tau_trace) {
    cfg_.validate();
  }

  const NetworkConfig& config() const noexcept { return cfg_; }
  NetworkConfig& config() noexcept { return cfg_; }
  SynapseMatrix& weights() noexcept { return weights_; }
  const SynapseMatrix& weights() const noexcept { return weights_; }
  NetworkState& state() noexcept { return state_; }
  const NetworkState& state() const noexcept { return state_; }
  TraceState& traces() noexcept { return traces_; }

  /// Uniform weights on [0, init_w_max] followed by one normalization.
  void initialize_weights(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {kStreamInit}));
    std::vector<double> w(weights_.size());
    for (auto& x : w) x = uniform01(rng) * cfg_.init_w_max;
    weights_.assign(std::move(w), std::vector<std::uint8_t>(weights_.size(), 0));
    normalize_weights(weights_, cfg_.plasticity.w_norm);
    weights_.clamp_all();
  }

  /// Presents one encoded sample. Membrane state and traces start from rest;
  /// the adaptive threshold carries over and only adapts while learning.
  /// `rule` and `w_alpha` matter only in learn mode.
  Presentation present(const SpikeRaster& raster, PresentMode mode, LearningRule rule = LearningRule::kStdp,
                       double w_alpha = 0.0) {
    const std::size_t n = cfg_.n_neurons;
    require(raster.n_inputs() == cfg_.n_inputs, "Network::present: raster width does not match n_inputs");
    const bool learn = mode == PresentMode::kLearn;
    reset_between_samples(state_, cfg_.lif);
    if (learn) traces_.reset();
    Presentation out;
    out.spike_counts.assign(n, 0);
    out.cumulative_current.assign(n, 0.0);
    current_.resize(n);
    prev_.assign(n, 0);
    spikes_.resize(n);
    for (std::size_t t = 0; t < raster.steps(); ++t) {
      const auto in = raster.row(t);
      compute_input_current(weights_, in, cfg_.inhibition, prev_, current_);
      for (std::size_t j = 0; j < n; ++j) {
        out.cumulative_current[j] += current_[j];
        current_[j] *= cfg_.synaptic_gain;
      }
      lif_step(state_, cfg_.lif, current_, spikes_, learn);
      for (std::size_t j = 0; j < n; ++j) {
        out.spike_counts[j] += spikes_[j];
        out.total_spikes += spikes_[j];
      }
      if (learn) {
        trace_decay_step(traces_, cfg_.lif.dt, in, spikes_);
        if (rule == LearningRule::kAStdp)
          astdp_update(weights_, traces_, in, spikes_, cfg_.plasticity, w_alpha);
        else
          stdp_update(weights_, traces_, in, spikes_, cfg_.plasticity);
      }
      std::copy(spikes_.begin(), spikes_.end(), prev_.begin());
    }
    return out;
  }

 private:
  NetworkConfig cfg_;
  SynapseMatrix weights_;
  NetworkState state_;
  TraceState traces_;
  std::vector<double> current_;
  std::vector<std::uint8_t> prev_;
  std::vector<std::uint8_t> spikes_;
};

}  // namespace astrosnn
