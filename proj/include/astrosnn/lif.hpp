#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/synapses.hpp"

namespace astrosnn {

/// Leaky integrate-and-fire neuron with adaptive threshold. Times in ms,
/// potentials in mV.
struct LifParams {
  double tau_mem = 100.0;
  double v_rest = -65.0;
  double v_reset = -60.0;
  double theta_0 = -52.0;
  double theta_plus = 0.05;
  double tau_theta = 1e7;
  double delta_ref = 5.0;
  double dt = 1.0;

  void validate() const {
    if (!(tau_mem > 0.0)) throw ValidationError("lif.tau_mem must be > 0");
    if (!(tau_theta > 0.0)) throw ValidationError("lif.tau_theta must be > 0");
    if (!(dt > 0.0)) throw ValidationError("lif.dt must be > 0");
    if (!(delta_ref >= 0.0)) throw ValidationError("lif.delta_ref must be >= 0");
    if (!(theta_plus >= 0.0)) throw ValidationError("lif.theta_plus must be >= 0");
    if (!(theta_0 > v_rest && theta_0 > v_reset))
      throw ValidationError("lif.theta_0 must exceed both v_rest and v_reset");
  }

  /// Number of timesteps a neuron stays refractory after a spike.
  int refractory_steps() const noexcept { return static_cast<int>(std::ceil(delta_ref / dt - 1e-9)); }
  double theta_decay() const noexcept { return std::exp(-dt / tau_theta); }
};

/// Static lateral inhibition among output neurons.
struct InhibitionConfig {
  double w_recurrent = -120.0;
  bool enabled = true;

  void validate() const {
    if (!(w_recurrent <= 0.0)) throw ValidationError("inhibition.w_recurrent must be <= 0");
  }
};

/// Per-neuron dynamic state of the output layer.
struct NetworkState {
  std::vector<double> v;
  std::vector<double> theta;
  std::vector<int> refrac_remaining;
  std::vector<std::uint8_t> last_spike;

  NetworkState() = default;
  NetworkState(std::size_t n_neurons, const LifParams& p)
      : v(n_neurons, p.v_rest), theta(n_neurons, 0.0), refrac_remaining(n_neurons, 0), last_spike(n_neurons, 0) {}

  std::size_t size() const noexcept { return v.size(); }
};

/// Advances every neuron by one forward-Euler step.
///
/// A refractory neuron ignores its input, holds v_reset and counts down. A
/// non-refractory neuron integrates v += dt/tau_mem * (v_rest - v + I) and
/// spikes when v >= theta_0 + theta. With `adapt_threshold` set, theta first
/// decays by the exact factor exp(-dt/tau_theta) and each spike then adds
/// theta_plus; otherwise theta is frozen.
///
/// Writes the spike vector into `spikes` and also into state.last_spike.
inline void lif_step(NetworkState& state, const LifParams& p, std::span<const double> input_current,
                     std::span<std::uint8_t> spikes, bool adapt_threshold = true) {
  const std::size_t n = state.size();
  require(input_current.size() == n && spikes.size() == n && state.theta.size() == n &&
              state.refrac_remaining.size() == n && state.last_spike.size() == n,
          "lif_step: dimension mismatch");
  const double k = p.dt / p.tau_mem;
  const double decay = p.theta_decay();
  const int refrac = p.refractory_steps();
  for (std::size_t i = 0; i < n; ++i) {
    if (adapt_threshold) state.theta[i] *= decay;
    std::uint8_t s = 0;
    if (state.refrac_remaining[i] > 0) {
      --state.refrac_remaining[i];
      state.v[i] = p.v_reset;
    } else {
      double v = state.v[i];
      v += k * (-v + p.v_rest + input_current[i]);
      if (!std::isfinite(v))
        throw NumericalFault("lif_step: non-finite membrane potential at neuron " + std::to_string(i), i);
      if (v >= p.theta_0 + state.theta[i]) {
        s = 1;
        v = p.v_reset;
        state.refrac_remaining[i] = refrac;
        if (adapt_threshold) state.theta[i] += p.theta_plus;
      }
      state.v[i] = v;
    }
    spikes[i] = s;
    state.last_spike[i] = s;
  }
}

/// Feedforward drive plus one-step-delayed lateral inhibition:
///   I[j] = sum_i w[i,j] * in[i] + w_recurrent * sum_{k != j} prev_out[k].
/// Faulty synapses hold 0 and so contribute nothing.
inline void compute_input_current(const SynapseMatrix& weights, std::span<const std::uint8_t> input_spikes,
                                  const InhibitionConfig& inhibition,
                                  std::span<const std::uint8_t> prev_output_spikes, std::span<double> current) {
  const std::size_t n = weights.n_neurons();
  require(input_spikes.size() == weights.n_inputs() && prev_output_spikes.size() == n && current.size() == n,
          "compute_input_current: dimension mismatch");
  std::fill(current.begin(), current.end(), 0.0);
  for (std::size_t i = 0; i < input_spikes.size(); ++i) {
    if (!input_spikes[i]) continue;
    const auto row = weights.row(i);
    for (std::size_t j = 0; j < n; ++j) current[j] += row[j];
  }
  if (inhibition.enabled && inhibition.w_recurrent != 0.0) {
    std::size_t total = 0;
    for (auto s : prev_output_spikes) total += s;
    if (total > 0) {
      for (std::size_t j = 0; j < n; ++j)
        current[j] += inhibition.w_recurrent * static_cast<double>(total - prev_output_spikes[j]);
    }
  }
}

/// Clears per-presentation state. The adaptive threshold persists.
inline void reset_between_samples(NetworkState& state, const LifParams& p) {
  std::fill(state.v.begin(), state.v.end(), p.v_rest);
  std::fill(state.refrac_remaining.begin(), state.refrac_remaining.end(), 0);
  std::fill(state.last_spike.begin(), state.last_spike.end(), std::uint8_t{0});
}

}  // namespace astrosnn
