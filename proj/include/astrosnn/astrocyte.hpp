#pragma once

// Tripartite-synapse micro-model: per-neuron 2-AG release, one astrocyte with
// Li-Rinzel calcium dynamics driven through IP3 by the pooled 2-AG, glutamate
// release on calcium threshold crossings, the shared e-SP signal, local DSE,
// and the resulting adaptive release probabilities (PR).
//
// Units: AstroParams time constants and dt are in ms. The Li-Rinzel block is
// written in its literature units (uM, s^-1) and converted internally.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "astrosnn/common.hpp"

namespace astrosnn::astro {

/// Two-variable Li-Rinzel reduction (Ca2+ and IP3R inactivation gate h) with
/// IP3 relaxing to a baseline and forced by total 2-AG.
struct LiRinzelParams {
  double c0 = 2.0;       ///< total cell-free Ca2+ (uM)
  double c1 = 0.185;     ///< ER-to-cytosol volume ratio
  double v1 = 6.0;       ///< max IP3R channel flux (s^-1)
  double v2 = 0.11;      ///< ER leak rate (s^-1)
  double v3 = 0.9;       ///< max SERCA pump flux (uM s^-1)
  double k3 = 0.1;       ///< SERCA half-activation (uM)
  double d1 = 0.13;      ///< IP3 dissociation (uM)
  double d2 = 1.049;     ///< Ca2+ inactivation dissociation (uM)
  double d3 = 0.9434;    ///< IP3 dissociation (uM)
  double d5 = 0.08234;   ///< Ca2+ activation dissociation (uM)
  double a2 = 0.2;       ///< IP3R binding rate for Ca2+ inhibition (uM^-1 s^-1)
  double ip3_base = 0.3; ///< IP3 resting level (uM), below the oscillatory band
  double tau_ip3 = 7.0;  ///< IP3 relaxation time constant (s)
  double r_ip3 = 0.0179; ///< IP3 production per unit 2-AG (uM s^-1)

  void validate() const {
    for (double x : {c0, c1, v1, v2, v3, k3, d1, d2, d3, d5, a2, ip3_base, r_ip3})
      if (!(x >= 0.0)) throw ValidationError("li_rinzel: rate coefficients must be non-negative");
    if (!(tau_ip3 > 0.0)) throw ValidationError("li_rinzel.tau_ip3 must be > 0");
  }

  double j_chan(double ca, double h, double ip3) const noexcept {
    const double m = ip3 / (ip3 + d1);
    const double n = ca / (ca + d5);
    const double mnh = m * n * h;
    return c1 * v1 * mnh * mnh * mnh * (er_ca(ca) - ca);
  }
  double j_leak(double ca) const noexcept { return c1 * v2 * (er_ca(ca) - ca); }
  double j_pump(double ca) const noexcept { return v3 * ca * ca / (k3 * k3 + ca * ca); }
  double er_ca(double ca) const noexcept { return (c0 - ca) / c1; }
  /// dh/dt = a2 * (Q2 * (1 - h) - ca * h), Q2 = d2 (ip3 + d1) / (ip3 + d3).
  double dh_dt(double ca, double h, double ip3) const noexcept {
    const double q2 = d2 * (ip3 + d1) / (ip3 + d3);
    return a2 * (q2 * (1.0 - h) - ca * h);
  }
  double h_inf(double ca, double ip3) const noexcept {
    const double q2 = d2 * (ip3 + d1) / (ip3 + d3);
    return q2 / (q2 + ca);
  }
};

/// Default values are calibration targets chosen so the two-neuron demo
/// settles near PR = PR0 without faults and shows partial recovery after
/// them. They are tuning inputs, not measured constants.
struct AstroParams {
  double tau_ag = 10000.0;    ///< 2-AG decay (ms)
  double r_ag = 0.01;         ///< 2-AG released per post-synaptic spike
  double tau_glu = 100.0;     ///< glutamate decay (ms)
  double r_glu = 10.0;        ///< glutamate released per Ca2+ event
  double tau_esp = 40000.0;   ///< e-SP time constant (ms)
  double m_esp = 920.0;       ///< e-SP gain per unit glutamate (percent)
  double k_ag = 80.0;         ///< DSE gain (percent per unit 2-AG)
  double ca_threshold = 0.3;  ///< Ca2+ level defining a release event (uM)
  LiRinzelParams li_rinzel;
  double dt = 1.0;  ///< ms

  void validate() const {
    if (!(tau_ag > 0.0 && tau_glu > 0.0 && tau_esp > 0.0 && dt > 0.0))
      throw ValidationError("astro: time constants and dt must be > 0");
    if (!(k_ag >= 0.0)) throw ValidationError("astro.k_ag must be >= 0");
    if (!(m_esp >= 0.0)) throw ValidationError("astro.m_esp must be >= 0");
    if (!(r_ag >= 0.0 && r_glu >= 0.0)) throw ValidationError("astro: release magnitudes must be >= 0");
    li_rinzel.validate();
  }
};

/// Resting (Ca2+, h) of the Li-Rinzel block at a fixed IP3 level, found by
/// bisection on dCa/dt with h held at its steady state.
inline std::pair<double, double> resting_calcium(const LiRinzelParams& p, double ip3) {
  auto f = [&](double ca) {
    const double h = p.h_inf(ca, ip3);
    return p.j_chan(ca, h, ip3) + p.j_leak(ca) - p.j_pump(ca);
  };
  double lo = 0.0;
  double hi = p.c0;
  // f(0) >= 0 (only leak from the ER), f(c0) <= 0 (ER empty, pump active).
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double ca = 0.5 * (lo + hi);
  return {ca, p.h_inf(ca, ip3)};
}

struct AstroState {
  std::size_t n_post = 0;
  std::size_t n_pre = 0;  ///< synapses per post neuron
  std::vector<double> ag;
  double ip3 = 0.0;
  double ca = 0.0;
  double gate_h = 1.0;
  double glu = 0.0;
  double esp = 0.0;
  std::vector<double> dse;
  std::vector<double> pr;   ///< n_post x n_pre, row-major
  std::vector<double> pr0;  ///< initial PR, same layout
  std::vector<std::uint8_t> faulty;
  bool ca_above = false;
  std::uint64_t step = 0;

  AstroState() = default;
  AstroState(std::size_t posts, std::size_t pres, std::vector<double> initial_pr, const AstroParams& p)
      : n_post(posts),
        n_pre(pres),
        ag(posts, 0.0),
        dse(posts, 0.0),
        pr(initial_pr),
        pr0(std::move(initial_pr)),
        faulty(posts * pres, 0) {
    require(pr0.size() == posts * pres, "AstroState: PR0 must have n_post * n_pre entries");
    ip3 = p.li_rinzel.ip3_base;
    std::tie(ca, gate_h) = resting_calcium(p.li_rinzel, ip3);
    ca_above = ca >= p.ca_threshold;
  }

  double pr_at(std::size_t post, std::size_t pre) const { return pr[post * n_pre + pre]; }
};

/// 2-AG: exponential decay, plus r_ag for each spiking post neuron.
inline void ag_step(AstroState& s, const AstroParams& p, const std::vector<std::uint8_t>& post_spikes) {
  require(post_spikes.size() == s.n_post, "ag_step: dimension mismatch");
  const double decay = std::exp(-p.dt / p.tau_ag);
  for (std::size_t k = 0; k < s.n_post; ++k) {
    s.ag[k] *= decay;
    if (post_spikes[k]) s.ag[k] += p.r_ag;
  }
}

/// One Euler step of IP3, Ca2+ and h. Returns true on an upward crossing of
/// ca_threshold; the detector re-arms only after Ca2+ has been below the
/// threshold for at least one step.
inline bool calcium_step(AstroState& s, const AstroParams& p) {
  const auto& lr = p.li_rinzel;
  const double dt_s = p.dt / 1000.0;
  double ag_total = 0.0;
  for (double a : s.ag) ag_total += a;
  const double ca = s.ca;
  const double h = s.gate_h;
  const double ip3 = s.ip3;
  const double dca = lr.j_chan(ca, h, ip3) + lr.j_leak(ca) - lr.j_pump(ca);
  s.ca = std::max(0.0, ca + dt_s * dca);
  s.gate_h = std::clamp(h + dt_s * lr.dh_dt(ca, h, ip3), 0.0, 1.0);
  s.ip3 = ip3 + dt_s * ((lr.ip3_base - ip3) / lr.tau_ip3 + lr.r_ip3 * ag_total);
  ++s.step;
  if (!std::isfinite(s.ca) || !std::isfinite(s.gate_h) || !std::isfinite(s.ip3))
    throw NumericalFault("calcium_step: non-finite state at step " + std::to_string(s.step), s.step);
  const bool above = s.ca >= p.ca_threshold;
  const bool event = above && !s.ca_above;
  s.ca_above = above;
  return event;
}

/// Glutamate: exponential decay plus r_glu on a calcium event.
inline void glu_step(AstroState& s, const AstroParams& p, bool ca_event) {
  s.glu *= std::exp(-p.dt / p.tau_glu);
  if (ca_event) s.glu += p.r_glu;
}

/// Euler step of tau_esp * d(eSP)/dt = -eSP + m_esp * Glu.
inline void esp_step(AstroState& s, const AstroParams& p) {
  s.esp += p.dt / p.tau_esp * (-s.esp + p.m_esp * s.glu);
}

/// DSE[k] = -AG[k] * K_AG.
inline void dse_compute(AstroState& s, const AstroParams& p) {
  for (std::size_t k = 0; k < s.n_post; ++k) s.dse[k] = -s.ag[k] * p.k_ag;
}

/// PR = clamp(PR0 * (1 + (DSE[k] + eSP) / 100), 0, 1); faulty synapses stay 0.
inline void pr_update(AstroState& s) {
  for (std::size_t k = 0; k < s.n_post; ++k) {
    const double gain = 1.0 + (s.dse[k] + s.esp) / 100.0;
    for (std::size_t i = 0; i < s.n_pre; ++i) {
      const std::size_t idx = k * s.n_pre + i;
      s.pr[idx] = s.faulty[idx] ? 0.0 : std::clamp(s.pr0[idx] * gain, 0.0, 1.0);
    }
  }
}

/// Fixed-threshold LIF used for the post-synaptic neurons of the micro-model.
struct MicroLifParams {
  double tau_mem = 1000.0;  ///< ms
  double v_rest = -65.0;
  double v_reset = -65.0;
  double v_threshold = -52.0;
  double refractory = 2.0;  ///< ms
  double w_syn = 1.6;       ///< mV per transmitted pre-synaptic spike

  void validate() const {
    if (!(tau_mem > 0.0)) throw ValidationError("micro_lif.tau_mem must be > 0");
    if (!(v_threshold > v_rest && v_threshold > v_reset))
      throw ValidationError("micro_lif.v_threshold must exceed v_rest and v_reset");
    if (!(refractory >= 0.0)) throw ValidationError("micro_lif.refractory must be >= 0");
  }
};

struct FaultEvent {
  double time_s = 0.0;
  std::size_t post = 0;
  double fraction = 0.0;                ///< used when `synapses` is empty
  std::vector<std::size_t> synapses;    ///< explicit synapse indices
};

struct MicroNetworkSpec {
  std::size_t n_post = 2;
  std::size_t n_pre_per_post = 10;
  std::vector<double> pr0;  ///< n_post x n_pre_per_post; empty means all 0.5
  double input_rate = 16.0; ///< Hz, homogeneous Poisson per pre-neuron
  std::vector<FaultEvent> fault_schedule;

  std::vector<double> initial_pr() const {
    if (pr0.empty()) return std::vector<double>(n_post * n_pre_per_post, 0.5);
    return pr0;
  }

  void validate() const {
    if (n_post == 0 || n_pre_per_post == 0) throw ValidationError("micro: n_post and n_pre must be > 0");
    if (!pr0.empty() && pr0.size() != n_post * n_pre_per_post)
      throw ValidationError("micro: pr0 must have n_post * n_pre entries");
    for (double v : pr0)
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("micro: pr0 entries must lie in [0, 1]");
    if (!(input_rate >= 0.0)) throw ValidationError("micro: input_rate must be >= 0");
    for (const auto& f : fault_schedule) {
      if (f.post >= n_post)
        throw ValidationError("micro: fault schedule references post neuron " + std::to_string(f.post) +
                              " but the network has " + std::to_string(n_post));
      if (!(f.fraction >= 0.0 && f.fraction <= 1.0))
        throw ValidationError("micro: fault fraction must lie in [0, 1]");
      for (auto syn : f.synapses)
        if (syn >= n_pre_per_post)
          throw ValidationError("micro: fault schedule references synapse " + std::to_string(syn) +
                                " of post neuron " + std::to_string(f.post) + " which does not exist");
      if (!(f.time_s >= 0.0)) throw ValidationError("micro: fault time must be >= 0");
    }
  }
};

/// One 1-second bin of the micro-experiment. Signals are bin averages.
struct TraceRow {
  double time_s = 0.0;  ///< end of the bin
  double esp = 0.0;
  std::vector<double> dse;       ///< per post neuron
  std::vector<double> rate_hz;   ///< per post neuron
  std::vector<double> pr_mean;   ///< per post neuron, over its healthy synapses
  double pr_healthy_high = 0.0;  ///< target neuron, healthy, PR0 at its maximum
  double pr_healthy_low = std::numeric_limits<double>::quiet_NaN();
  double pr_faulty = std::numeric_limits<double>::quiet_NaN();
  std::size_t ca_events = 0;
};

struct TraceLog {
  std::vector<TraceRow> rows;
  std::size_t target_neuron = 0;  ///< neuron whose synapse classes are reported
};

inline std::vector<std::size_t> resolve_fault_synapses(const FaultEvent& ev, std::size_t n_pre, std::uint64_t seed,
                                                       std::size_t event_index) {
  if (!ev.synapses.empty()) return ev.synapses;
  std::vector<std::size_t> idx(n_pre);
  for (std::size_t i = 0; i < n_pre; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, {kStreamMicro, 0xFA17, event_index}));
  shuffle(idx.begin(), idx.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(ev.fraction * static_cast<double>(n_pre)));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Simulates n_post post-neurons, each driven by n_pre Poisson inputs gated
/// by their release probabilities, coupled to one astrocyte. Pre-synaptic
/// spike times and transmission draws are generated per synapse in
/// continuous time, so runs at different dt see the same input realisation.
inline TraceLog run_micro_experiment(const MicroNetworkSpec& spec, const AstroParams& params,
                                     const MicroLifParams& lif, double duration_s, std::uint64_t seed) {
  spec.validate();
  params.validate();
  lif.validate();
  require(duration_s >= 0.0, "run_micro_experiment: duration must be >= 0");
  const std::size_t n_post = spec.n_post;
  const std::size_t n_pre = spec.n_pre_per_post;
  const std::size_t n_syn = n_post * n_pre;

  AstroState s(n_post, n_pre, spec.initial_pr(), params);

  // Fault bookkeeping: which synapses the schedule will fault, and when.
  struct PendingFault {
    std::uint64_t step;
    std::size_t post;
    std::vector<std::size_t> synapses;
  };
  std::vector<PendingFault> pending;
  std::vector<std::uint8_t> scheduled(n_syn, 0);
  for (std::size_t e = 0; e < spec.fault_schedule.size(); ++e) {
    const auto& ev = spec.fault_schedule[e];
    auto syn = resolve_fault_synapses(ev, n_pre, seed, e);
    for (auto i : syn) scheduled[ev.post * n_pre + i] = 1;
    pending.push_back({static_cast<std::uint64_t>(std::llround(ev.time_s * 1000.0 / params.dt)), ev.post, syn});
  }
  TraceLog log;
  log.target_neuron = spec.fault_schedule.empty() ? n_post - 1 : spec.fault_schedule.back().post;
  const std::size_t target = log.target_neuron;
  double target_pr0_max = 0.0;
  for (std::size_t i = 0; i < n_pre; ++i) target_pr0_max = std::max(target_pr0_max, s.pr0[target * n_pre + i]);

  // Input generators.
  const double dt_ms = params.dt;
  std::vector<Rng> isi_rng;
  std::vector<Rng> tx_rng;
  std::vector<double> next_spike_ms(n_syn, std::numeric_limits<double>::infinity());
  isi_rng.reserve(n_syn);
  tx_rng.reserve(n_syn);
  auto draw_isi = [&](std::size_t k) { return -std::log1p(-uniform01(isi_rng[k])) / spec.input_rate * 1000.0; };
  for (std::size_t k = 0; k < n_syn; ++k) {
    isi_rng.emplace_back(derive_seed(seed, {kStreamMicro, 1, k}));
    tx_rng.emplace_back(derive_seed(seed, {kStreamMicro, 2, k}));
    if (spec.input_rate > 0.0) next_spike_ms[k] = draw_isi(k);
  }

  std::vector<double> v(n_post, lif.v_rest);
  std::vector<double> refrac_ms(n_post, 0.0);
  std::vector<std::uint8_t> post_spikes(n_post, 0);
  std::vector<double> drive(n_post, 0.0);

  const auto total_steps = static_cast<std::uint64_t>(std::llround(duration_s * 1000.0 / dt_ms));
  const auto steps_per_bin = static_cast<std::uint64_t>(std::llround(1000.0 / dt_ms));
  require(steps_per_bin > 0, "run_micro_experiment: dt must not exceed 1 s");

  // Bin accumulators.
  TraceRow acc;
  auto reset_acc = [&] {
    acc = TraceRow{};
    acc.dse.assign(n_post, 0.0);
    acc.rate_hz.assign(n_post, 0.0);
    acc.pr_mean.assign(n_post, 0.0);
    acc.pr_healthy_low = 0.0;
    acc.pr_faulty = 0.0;
  };
  reset_acc();
  std::size_t n_high = 0, n_low = 0, n_fault_cls = 0;
  for (std::size_t i = 0; i < n_pre; ++i) {
    const std::size_t idx = target * n_pre + i;
    if (scheduled[idx])
      ++n_fault_cls;
    else if (s.pr0[idx] >= target_pr0_max)
      ++n_high;
    else
      ++n_low;
  }

  const double leak = dt_ms / lif.tau_mem;
  for (std::uint64_t step = 0; step < total_steps; ++step) {
    for (const auto& f : pending)
      if (f.step == step)
        for (auto i : f.synapses) s.faulty[f.post * n_pre + i] = 1;

    dse_compute(s, params);
    pr_update(s);

    // Pre-synaptic arrivals in [t, t + dt).
    const double t_end = static_cast<double>(step + 1) * dt_ms;
    std::fill(drive.begin(), drive.end(), 0.0);
    for (std::size_t k = 0; k < n_syn; ++k) {
      while (next_spike_ms[k] < t_end) {
        if (uniform01(tx_rng[k]) < s.pr[k]) drive[k / n_pre] += lif.w_syn;
        next_spike_ms[k] += draw_isi(k);
      }
    }
    for (std::size_t j = 0; j < n_post; ++j) {
      post_spikes[j] = 0;
      if (refrac_ms[j] > 0.0) {
        refrac_ms[j] -= dt_ms;
        v[j] = lif.v_reset;
        continue;
      }
      v[j] += leak * (lif.v_rest - v[j]) + drive[j];
      if (v[j] >= lif.v_threshold) {
        post_spikes[j] = 1;
        v[j] = lif.v_reset;
        refrac_ms[j] = lif.refractory;
      }
    }

    ag_step(s, params, post_spikes);
    const bool event = calcium_step(s, params);
    glu_step(s, params, event);
    esp_step(s, params);

    // Accumulate.
    acc.esp += s.esp;
    acc.ca_events += event ? 1 : 0;
    for (std::size_t j = 0; j < n_post; ++j) {
      acc.dse[j] += -s.ag[j] * params.k_ag;
      acc.rate_hz[j] += post_spikes[j];
      double sum = 0.0;
      std::size_t healthy = 0;
      for (std::size_t i = 0; i < n_pre; ++i) {
        const std::size_t idx = j * n_pre + i;
        if (!s.faulty[idx]) {
          sum += s.pr[idx];
          ++healthy;
        }
      }
      acc.pr_mean[j] += healthy ? sum / static_cast<double>(healthy) : 0.0;
    }
    double hi = 0.0, lo = 0.0, fa = 0.0;
    for (std::size_t i = 0; i < n_pre; ++i) {
      const std::size_t idx = target * n_pre + i;
      if (scheduled[idx])
        fa += s.pr[idx];
      else if (s.pr0[idx] >= target_pr0_max)
        hi += s.pr[idx];
      else
        lo += s.pr[idx];
    }
    acc.pr_healthy_high += n_high ? hi / static_cast<double>(n_high) : 0.0;
    acc.pr_healthy_low += n_low ? lo / static_cast<double>(n_low) : 0.0;
    acc.pr_faulty += n_fault_cls ? fa / static_cast<double>(n_fault_cls) : 0.0;

    if ((step + 1) % steps_per_bin == 0) {
      const double n = static_cast<double>(steps_per_bin);
      TraceRow row = acc;
      row.time_s = static_cast<double>((step + 1) / steps_per_bin);
      row.esp /= n;
      for (std::size_t j = 0; j < n_post; ++j) {
        row.dse[j] /= n;
        row.pr_mean[j] /= n;
        // spike count over a 1 s bin is the rate in Hz
      }
      row.pr_healthy_high = n_high ? row.pr_healthy_high / n : std::numeric_limits<double>::quiet_NaN();
      row.pr_healthy_low = n_low ? row.pr_healthy_low / n : std::numeric_limits<double>::quiet_NaN();
      row.pr_faulty = n_fault_cls ? row.pr_faulty / n : std::numeric_limits<double>::quiet_NaN();
      log.rows.push_back(std::move(row));
      reset_acc();
    }
  }
  return log;
}

/// Two post neurons with ten PR0 = 0.5 synapses each; 70% of N2's synapses
/// fail at 200 s.
inline MicroNetworkSpec fig2_scenario() {
  MicroNetworkSpec spec;
  spec.n_post = 2;
  spec.n_pre_per_post = 10;
  spec.pr0.assign(20, 0.5);
  spec.fault_schedule.push_back({200.0, 1, 0.7, {}});
  return spec;
}

/// As fig2, but N2 has one weak synapse (PR0 = 0.1) and eight of its nine
/// strong synapses fail at 200 s.
inline MicroNetworkSpec fig5_scenario() {
  MicroNetworkSpec spec = fig2_scenario();
  spec.pr0[1 * 10 + 9] = 0.1;
  spec.fault_schedule = {{200.0, 1, 0.0, {0, 1, 2, 3, 4, 5, 6, 7}}};
  return spec;
}

inline constexpr const char* kTraceHeader =
    "time_s,esp,dse_n1,dse_n2,pr_class_healthy_high,pr_class_healthy_low,pr_class_faulty,rate_n1_hz,rate_n2_hz";

namespace detail {
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}
}  // namespace detail

inline void write_trace_csv(std::ostream& os, const TraceLog& log) {
  os << kTraceHeader << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : log.rows) {
    auto at = [&](const std::vector<double>& v, std::size_t k) { return k < v.size() ? v[k] : nan; };
    os << detail::fmt(r.time_s) << ',' << detail::fmt(r.esp) << ',' << detail::fmt(at(r.dse, 0)) << ','
       << detail::fmt(at(r.dse, 1)) << ',' << detail::fmt(r.pr_healthy_high) << ','
       << detail::fmt(r.pr_healthy_low) << ',' << detail::fmt(r.pr_faulty) << ',' << detail::fmt(at(r.rate_hz, 0))
       << ',' << detail::fmt(at(r.rate_hz, 1)) << '\n';
  }
}

/// A scenario file bundles a MicroNetworkSpec with optional parameter
/// overrides. Format, one directive per line, '#' starts a comment:
///
///   n_post = 2
///   n_pre = 10
///   input_rate = 16
///   pr0 = 0.5                 # all synapses
///   pr0 1 9 = 0.1             # synapse 9 of post neuron 1
///   fault = 200 1 0.7         # time_s post fraction
///   fault_synapses = 200 1 0 1 2 3
///   duration = 400
///   seed = 1
///   astro.<field> = value     # any AstroParams / Li-Rinzel field
///   lif.<field> = value       # any MicroLifParams field
struct Scenario {
  MicroNetworkSpec spec;
  AstroParams params;
  MicroLifParams lif;
  std::optional<double> duration_s;
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline bool set_astro_field(AstroParams& p, MicroLifParams& l, const std::string& key, double v) {
  auto& lr = p.li_rinzel;
  struct Entry {
    const char* name;
    double* field;
  };
  const Entry entries[] = {
      {"astro.tau_ag", &p.tau_ag},       {"astro.r_ag", &p.r_ag},         {"astro.tau_glu", &p.tau_glu},
      {"astro.r_glu", &p.r_glu},         {"astro.tau_esp", &p.tau_esp},   {"astro.m_esp", &p.m_esp},
      {"astro.k_ag", &p.k_ag},           {"astro.ca_threshold", &p.ca_threshold},
      {"astro.dt", &p.dt},               {"astro.c0", &lr.c0},            {"astro.c1", &lr.c1},
      {"astro.v1", &lr.v1},              {"astro.v2", &lr.v2},            {"astro.v3", &lr.v3},
      {"astro.k3", &lr.k3},              {"astro.d1", &lr.d1},            {"astro.d2", &lr.d2},
      {"astro.d3", &lr.d3},              {"astro.d5", &lr.d5},            {"astro.a2", &lr.a2},
      {"astro.ip3_base", &lr.ip3_base},  {"astro.tau_ip3", &lr.tau_ip3},  {"astro.r_ip3", &lr.r_ip3},
      {"lif.tau_mem", &l.tau_mem},       {"lif.v_rest", &l.v_rest},       {"lif.v_reset", &l.v_reset},
      {"lif.v_threshold", &l.v_threshold}, {"lif.refractory", &l.refractory}, {"lif.w_syn", &l.w_syn},
  };
  for (const auto& e : entries) {
    if (key == e.name) {
      *e.field = v;
      return true;
    }
  }
  return false;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses a scenario; parameter overrides apply on top of `base` and
/// `base_lif`.
inline Scenario parse_scenario(std::istream& in, const AstroParams& base = {}, const MicroLifParams& base_lif = {}) {
  Scenario sc;
  sc.params = base;
  sc.lif = base_lif;
  sc.spec.pr0.clear();
  std::vector<std::pair<std::vector<std::size_t>, double>> pr0_overrides;
  std::optional<double> pr0_all;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("scenario line " + std::to_string(lineno) + ": " + msg, lineno);
  };
  auto numbers = [&](const std::string& text) {
    std::istringstream is(text);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        fail("expected a number, got '" + tok + "'");
      }
      if (used != tok.size()) fail("expected a number, got '" + tok + "'");
      out.push_back(v);
    }
    return out;
  };
  auto as_index = [&](double v) -> std::size_t {
    if (v < 0.0 || v != std::floor(v)) fail("expected a non-negative integer, got " + std::to_string(v));
    return static_cast<std::size_t>(v);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string lhs = detail::trim(line.substr(0, eq));
    const std::string rhs = detail::trim(line.substr(eq + 1));
    std::istringstream lhs_stream(lhs);
    std::string key;
    lhs_stream >> key;
    std::string lhs_rest;
    std::getline(lhs_stream, lhs_rest);
    const auto args = numbers(lhs_rest);
    const auto vals = numbers(rhs);
    if (vals.empty()) fail("missing value for '" + key + "'");
    if (key == "n_post" || key == "n_pre" || key == "seed") {
      if (vals.size() != 1) fail("'" + key + "' takes one value");
      const auto n = as_index(vals[0]);
      if (key == "n_post")
        sc.spec.n_post = n;
      else if (key == "n_pre")
        sc.spec.n_pre_per_post = n;
      else
        sc.seed = n;
    } else if (key == "input_rate" || key == "duration") {
      if (vals.size() != 1) fail("'" + key + "' takes one value");
      if (key == "input_rate")
        sc.spec.input_rate = vals[0];
      else
        sc.duration_s = vals[0];
    } else if (key == "pr0") {
      if (vals.size() != 1) fail("'pr0' takes one value");
      if (args.empty()) {
        pr0_all = vals[0];
      } else if (args.size() == 2) {
        pr0_overrides.push_back({{as_index(args[0]), as_index(args[1])}, vals[0]});
      } else {
        fail("'pr0' takes either no indices or 'post pre'");
      }
    } else if (key == "fault") {
      if (vals.size() != 3) fail("'fault' expects: time_s post fraction");
      sc.spec.fault_schedule.push_back({vals[0], as_index(vals[1]), vals[2], {}});
    } else if (key == "fault_synapses") {
      if (vals.size() < 3) fail("'fault_synapses' expects: time_s post idx...");
      FaultEvent ev{vals[0], as_index(vals[1]), 0.0, {}};
      for (std::size_t k = 2; k < vals.size(); ++k) ev.synapses.push_back(as_index(vals[k]));
      sc.spec.fault_schedule.push_back(std::move(ev));
    } else {
      if (vals.size() != 1) fail("'" + key + "' takes one value");
      if (!detail::set_astro_field(sc.params, sc.lif, key, vals[0])) fail("unknown key '" + key + "'");
    }
  }
  sc.spec.pr0.assign(sc.spec.n_post * sc.spec.n_pre_per_post, pr0_all.value_or(0.5));
  for (const auto& [ij, v] : pr0_overrides) {
    if (ij[0] >= sc.spec.n_post || ij[1] >= sc.spec.n_pre_per_post)
      throw ParseError("scenario: pr0 override index out of range", 0);
    sc.spec.pr0[ij[0] * sc.spec.n_pre_per_post + ij[1]] = v;
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path, const AstroParams& base = {},
                              const MicroLifParams& base_lif = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'", 0);
  return parse_scenario(in, base, base_lif);
}

}  // namespace astrosnn::astro
