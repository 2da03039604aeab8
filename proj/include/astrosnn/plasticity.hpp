#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/synapses.hpp"

namespace astrosnn {

/// Pre- and post-synaptic spike traces. Set to 1 on a spike of the owning
/// neuron and decaying exponentially with tau_trace (ms) otherwise.
struct TraceState {
  std::vector<double> x_pre;
  std::vector<double> x_post;
  double tau_trace = 20.0;

  TraceState() = default;
  TraceState(std::size_t n_inputs, std::size_t n_neurons, double tau)
      : x_pre(n_inputs, 0.0), x_post(n_neurons, 0.0), tau_trace(tau) {}

  void reset() {
    std::fill(x_pre.begin(), x_pre.end(), 0.0);
    std::fill(x_post.begin(), x_post.end(), 0.0);
  }
};

enum class LearningRule { kStdp, kAStdp };

inline std::string to_string(LearningRule r) { return r == LearningRule::kStdp ? "stdp" : "astdp"; }

inline LearningRule parse_rule(const std::string& s) {
  if (s == "stdp" || s == "STDP") return LearningRule::kStdp;
  if (s == "astdp" || s == "a-stdp" || s == "A_STDP" || s == "A-STDP") return LearningRule::kAStdp;
  throw ValidationError("unknown learning rule '" + s + "' (expected stdp or astdp)");
}

struct PlasticityParams {
  double eta_pre = 1e-4;
  double eta_post = 1e-2;
  LearningRule mode = LearningRule::kStdp;
  double alpha = 98.0;  ///< percentile for w_alpha, in (0, 100]
  double sigma = 2.0;   ///< A-STDP non-linearity exponent
  double w_norm = 78.4;
  bool w_alpha_healthy_only = false;

  void validate() const {
    if (!(eta_pre >= 0.0)) throw ValidationError("plasticity.eta_pre must be >= 0");
    if (!(eta_post >= 0.0)) throw ValidationError("plasticity.eta_post must be >= 0");
    if (!(alpha > 0.0 && alpha <= 100.0)) throw ValidationError("plasticity.alpha must lie in (0, 100]");
    if (!(sigma >= 0.0)) throw ValidationError("plasticity.sigma must be >= 0");
    if (!(w_norm > 0.0)) throw ValidationError("plasticity.w_norm must be > 0");
  }
};

/// Raised when A-STDP is asked to scale by a non-positive w_alpha.
class SurrogateDegenerate : public Error {
 public:
  explicit SurrogateDegenerate(const std::string& what) : Error(ExitCode::kNumericalFault, what) {}
};

/// Decays every trace by exp(-dt/tau_trace), then sets the traces of this
/// step's spiking neurons to 1.
inline void trace_decay_step(TraceState& traces, double dt, std::span<const std::uint8_t> pre_spikes,
                             std::span<const std::uint8_t> post_spikes) {
  require(dt > 0.0, "trace_decay_step: dt must be > 0");
  require(pre_spikes.size() == traces.x_pre.size() && post_spikes.size() == traces.x_post.size(),
          "trace_decay_step: dimension mismatch");
  const double decay = std::exp(-dt / traces.tau_trace);
  for (std::size_t i = 0; i < traces.x_pre.size(); ++i) traces.x_pre[i] = pre_spikes[i] ? 1.0 : traces.x_pre[i] * decay;
  for (std::size_t j = 0; j < traces.x_post.size(); ++j)
    traces.x_post[j] = post_spikes[j] ? 1.0 : traces.x_post[j] * decay;
}

namespace detail {

// Potentiation on post spikes (scaled by `multiplier(w)` evaluated on the
// pre-update weight), depression on pre spikes, then clamping of every
// touched entry. A matrix left out of bounds by normalization is clamped in
// full. Faulty entries are never written.
template <typename Multiplier>
void apply_trace_rule(SynapseMatrix& weights, const TraceState& traces, std::span<const std::uint8_t> pre_spikes,
                      std::span<const std::uint8_t> post_spikes, const PlasticityParams& p, Multiplier multiplier) {
  const std::size_t n_in = weights.n_inputs();
  const std::size_t n_out = weights.n_neurons();
  require(pre_spikes.size() == n_in && post_spikes.size() == n_out && traces.x_pre.size() == n_in &&
              traces.x_post.size() == n_out,
          "stdp_update: dimension mismatch");
  const double w_max = weights.w_max();
  bool any_post = false;
  for (std::size_t j = 0; j < n_out; ++j) {
    if (!post_spikes[j]) continue;
    any_post = true;
    for (std::size_t i = 0; i < n_in; ++i) {
      const double x = traces.x_pre[i];
      if (x == 0.0 || weights.is_faulty(i, j)) continue;
      auto w = weights.row(i);
      w[j] += p.eta_post * x * multiplier(w[j]);
    }
  }
  for (std::size_t i = 0; i < n_in; ++i) {
    if (!pre_spikes[i]) continue;
    auto w = weights.row(i);
    const auto f = weights.fault_row(i);
    for (std::size_t j = 0; j < n_out; ++j)
      if (!f[j]) w[j] -= p.eta_pre * traces.x_post[j];
  }
  if (!weights.in_bounds()) {
    weights.clamp_all();
    return;
  }
  for (std::size_t i = 0; i < n_in; ++i) {
    if (pre_spikes[i]) {
      for (auto& w : weights.row(i)) w = std::clamp(w, 0.0, w_max);
    } else if (any_post) {
      auto w = weights.row(i);
      for (std::size_t j = 0; j < n_out; ++j)
        if (post_spikes[j]) w[j] = std::clamp(w[j], 0.0, w_max);
    }
  }
}

}  // namespace detail

/// Trace STDP: on a post spike at j, w[i,j] += eta_post * x_pre[i]; on a pre
/// spike at i, w[i,j] -= eta_pre * x_post[j]. Result clamped to [0, w_max].
inline void stdp_update(SynapseMatrix& weights, const TraceState& traces, std::span<const std::uint8_t> pre_spikes,
                        std::span<const std::uint8_t> post_spikes, const PlasticityParams& p) {
  detail::apply_trace_rule(weights, traces, pre_spikes, post_spikes, p, [](double) { return 1.0; });
}

/// Astrocyte-augmented STDP. Identical to stdp_update except that the
/// potentiation term of each synapse is scaled by (w / w_alpha)^sigma.
inline void astdp_update(SynapseMatrix& weights, const TraceState& traces, std::span<const std::uint8_t> pre_spikes,
                         std::span<const std::uint8_t> post_spikes, const PlasticityParams& p, double w_alpha) {
  if (!(w_alpha > 0.0)) throw SurrogateDegenerate("astdp_update: w_alpha must be > 0");
  const double inv = 1.0 / w_alpha;
  const double sigma = p.sigma;
  if (sigma == 2.0) {
    detail::apply_trace_rule(weights, traces, pre_spikes, post_spikes, p, [inv](double w) {
      const double r = w * inv;
      return r * r;
    });
  } else {
    detail::apply_trace_rule(weights, traces, pre_spikes, post_spikes, p,
                             [inv, sigma](double w) { return std::pow(w * inv, sigma); });
  }
}

/// Nearest-rank percentile: the k-th smallest of n values with
/// k = ceil(alpha/100 * n), k >= 1.
inline std::size_t nearest_rank(double alpha, std::size_t n) {
  const double x = alpha / 100.0 * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// The weight at the alpha-th percentile of the matrix (nearest rank). By
/// default stuck-at-zero entries take part as zeros; `healthy_only` excludes
/// them.
inline double compute_w_alpha(const SynapseMatrix& weights, double alpha, bool healthy_only = false) {
  require(alpha > 0.0 && alpha <= 100.0, "compute_w_alpha: alpha must lie in (0, 100]");
  std::vector<double> values;
  values.reserve(weights.size());
  const auto w = weights.data();
  const auto f = weights.fault_mask();
  for (std::size_t k = 0; k < w.size(); ++k)
    if (!healthy_only || !f[k]) values.push_back(w[k]);
  require(!values.empty(), "compute_w_alpha: no synapses");
  const auto k = nearest_rank(alpha, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

/// Rescales each output neuron's incoming healthy weights so the column sums
/// to w_norm. Results are not clamped to w_max. Columns summing to zero are
/// left untouched; their count is returned.
inline std::size_t normalize_weights(SynapseMatrix& weights, double w_norm) {
  const std::size_t n_in = weights.n_inputs();
  const std::size_t n_out = weights.n_neurons();
  std::vector<double> sums(n_out, 0.0);
  for (std::size_t i = 0; i < n_in; ++i) {
    const auto r = weights.row(i);
    for (std::size_t j = 0; j < n_out; ++j) sums[j] += r[j];
  }
  std::size_t skipped = 0;
  std::vector<double> factor(n_out, 1.0);
  for (std::size_t j = 0; j < n_out; ++j) {
    if (sums[j] > 0.0)
      factor[j] = w_norm / sums[j];
    else
      ++skipped;
  }
  bool exceeded = false;
  const double w_max = weights.w_max();
  for (std::size_t i = 0; i < n_in; ++i) {
    auto r = weights.row(i);
    for (std::size_t j = 0; j < n_out; ++j) {
      r[j] *= factor[j];
      exceeded |= r[j] > w_max;
    }
  }
  if (exceeded) weights.mark_out_of_bounds();
  return skipped;
}

}  // namespace astrosnn
