#pragma once

// Training, evaluation, fault injection and repair of the single-layer
// network on an image classification dataset.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/encoding.hpp"
#include "astrosnn/idx.hpp"
#include "astrosnn/network.hpp"
#include "astrosnn/plasticity.hpp"

namespace astrosnn {

// ---------------------------------------------------------------------------
// Data

struct DataConfig {
  std::string dataset = "mnist";
  std::filesystem::path data_dir;
  std::size_t train_samples = 0;  ///< 0 = whole split
  std::size_t test_samples = 0;   ///< 0 = whole split
  bool sobel = false;

  void validate() const {
    if (dataset != "mnist" && dataset != "fmnist")
      throw ValidationError("run.dataset must be 'mnist' or 'fmnist', got '" + dataset + "'");
  }
};

struct Dataset {
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
};

/// Finds the directory holding a dataset: `data_dir/<dataset>` if present,
/// else `data_dir` itself.
inline std::filesystem::path dataset_directory(const DataConfig& cfg) {
  const auto sub = cfg.data_dir / cfg.dataset;
  if (std::filesystem::is_directory(sub)) return sub;
  return cfg.data_dir;
}

inline Dataset load_dataset(const DataConfig& cfg) {
  cfg.validate();
  const auto dir = dataset_directory(cfg);
  Dataset d;
  auto load = [&](bool train, std::size_t limit) {
    const auto [img, lbl] = find_split(dir, train);
    auto samples = load_idx(img, lbl);
    if (limit > 0 && limit < samples.size()) samples.resize(limit);
    if (cfg.sobel)
      for (auto& s : samples) s = sobel_filter(s);
    return samples;
  };
  d.train = load(true, cfg.train_samples);
  d.test = load(false, cfg.test_samples);
  return d;
}

// ---------------------------------------------------------------------------
// Protocol configuration

struct TrainConfig {
  std::size_t epochs = 2;
  std::size_t eval_every = 0;      ///< samples between evaluations; 0 = once per epoch
  std::size_t assign_samples = 0;  ///< training samples used for labelling; 0 = all
  bool normalize_each_sample = true;
  LearningRule rule = LearningRule::kStdp;  ///< A-STDP here only serves reduction checks

  void validate() const {}
};

struct RepairConfig {
  std::size_t astdp_epochs = 3;
  std::size_t stdp_epochs = 1;
  std::size_t eval_every = 1000;
  std::size_t patience = 2;
  std::size_t w_alpha_every = 16;
  bool normalize_each_sample = false;

  void validate() const {
    if (astdp_epochs == 0 || stdp_epochs == 0) throw ValidationError("repair epochs must be > 0");
    if (eval_every == 0) throw ValidationError("repair.eval_every must be > 0");
    if (patience == 0) throw ValidationError("repair.patience must be > 0");
    if (w_alpha_every == 0) throw ValidationError("repair.w_alpha_every must be > 0");
  }
};

/// How silent presentations are handled at inference time: re-present with
/// the input rate raised by `retry_rate_step` up to `max_retries` times, then
/// fall back to the accumulated input current.
struct InferenceConfig {
  double retry_rate_step = 32.0;
  std::size_t max_retries = 4;
};

struct ExperimentConfig {
  NetworkConfig net;
  EncoderConfig encoder;
  TrainConfig train;
  RepairConfig repair;
  InferenceConfig inference;
  std::uint64_t seed = 1;

  void validate() const {
    net.validate();
    encoder.validate();
    if (std::abs(encoder.dt - net.lif.dt) > 1e-12) throw ValidationError("encoder.dt must equal lif.dt");
    train.validate();
    repair.validate();
    EncoderConfig top = encoder;
    top.max_rate += inference.retry_rate_step * static_cast<double>(inference.max_retries);
    if (top.max_rate * top.dt / 1000.0 > 1.0)
      throw ValidationError("inference: retry rate exceeds 1 spike per step");
  }
};

/// One evaluation point on a learning curve.
struct ExperimentRecord {
  std::string phase;
  std::size_t samples_seen = 0;
  double test_accuracy = 0.0;
  double w_alpha = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

using RecordSink = std::function<void(const ExperimentRecord&)>;

// ---------------------------------------------------------------------------
// Inference

struct ClassAssignment {
  std::vector<std::uint8_t> neuron_class;  ///< argmax class, ties to the lowest id
  std::vector<double> response;            ///< n_neurons x 10 mean spike counts

  std::size_t n_neurons() const noexcept { return neuron_class.size(); }
  /// Neurons whose response row is all zero (labelled 0 by the tie rule).
  std::size_t silent_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t j = 0; j < neuron_class.size(); ++j) {
      bool any = false;
      for (std::size_t c = 0; c < kNumClasses; ++c) any |= response[j * kNumClasses + c] > 0.0;
      n += any ? 0 : 1;
    }
    return n;
  }
  friend bool operator==(const ClassAssignment&, const ClassAssignment&) = default;
};

struct InferenceResponse {
  std::vector<double> values;  ///< spike counts, or input currents on fallback
  bool used_current = false;
};

/// Presents a sample in inference mode, raising the input rate while the
/// layer stays silent.
inline InferenceResponse infer_response(Network& net, const ImageSample& sample, const ExperimentConfig& cfg,
                                        std::uint64_t stream_seed) {
  InferenceResponse out;
  Presentation p;
  for (std::size_t attempt = 0; attempt <= cfg.inference.max_retries; ++attempt) {
    EncoderConfig enc = cfg.encoder;
    enc.max_rate += cfg.inference.retry_rate_step * static_cast<double>(attempt);
    Rng rng(derive_seed(stream_seed, {attempt}));
    p = net.present(poisson_encode(sample, enc, rng), PresentMode::kInfer);
    if (p.total_spikes > 0) {
      out.values.assign(p.spike_counts.begin(), p.spike_counts.end());
      return out;
    }
  }
  out.values = p.cumulative_current;
  out.used_current = true;
  return out;
}

/// Builds an assignment from per-class mean responses (n x 10, row-major).
inline ClassAssignment assignment_from_responses(std::vector<double> response) {
  require(response.size() % kNumClasses == 0, "assignment_from_responses: row length must be 10");
  const std::size_t n = response.size() / kNumClasses;
  ClassAssignment a;
  a.neuron_class.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    double best = response[j * kNumClasses];
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      if (response[j * kNumClasses + c] > best) {
        best = response[j * kNumClasses + c];
        a.neuron_class[j] = static_cast<std::uint8_t>(c);
      }
    }
  }
  a.response = std::move(response);
  return a;
}

/// Labels each neuron with the class it responds to most strongly on
/// average over `samples`, with plasticity and threshold adaptation off.
inline ClassAssignment assign_classes(Network& net, std::span<const ImageSample> samples,
                                      const ExperimentConfig& cfg) {
  require(!samples.empty(), "assign_classes: no samples");
  const std::size_t n = net.config().n_neurons;
  std::vector<double> sum(n * kNumClasses, 0.0);
  std::vector<std::size_t> per_class(kNumClasses, 0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto r = infer_response(net, samples[s], cfg, derive_seed(cfg.seed, {kStreamAssign, s}));
    const std::size_t c = samples[s].label;
    ++per_class[c];
    if (r.used_current) continue;
    for (std::size_t j = 0; j < n; ++j) sum[j * kNumClasses + c] += r.values[j];
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < kNumClasses; ++c)
      if (per_class[c]) sum[j * kNumClasses + c] /= static_cast<double>(per_class[c]);
  return assignment_from_responses(std::move(sum));
}

/// Class with the highest mean response over its assigned neurons. A class
/// with no neurons scores 0; ties go to the lowest class id.
inline std::size_t predict(const ClassAssignment& a, std::span<const double> response) {
  require(response.size() == a.n_neurons(), "predict: response size mismatch");
  std::array<double, kNumClasses> sum{};
  std::array<std::size_t, kNumClasses> count{};
  for (std::size_t j = 0; j < response.size(); ++j) {
    sum[a.neuron_class[j]] += response[j];
    ++count[a.neuron_class[j]];
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double score = count[c] ? sum[c] / static_cast<double>(count[c]) : 0.0;
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

struct EvalResult {
  double accuracy = 0.0;
  std::size_t current_fallbacks = 0;
};

inline EvalResult evaluate(Network& net, const ClassAssignment& a, std::span<const ImageSample> samples,
                           const ExperimentConfig& cfg) {
  require(!samples.empty(), "evaluate: no samples");
  require(a.n_neurons() == net.config().n_neurons, "evaluate: assignment does not match network size");
  std::size_t correct = 0;
  EvalResult out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto r = infer_response(net, samples[s], cfg, derive_seed(cfg.seed, {kStreamEval, s}));
    out.current_fallbacks += r.used_current ? 1 : 0;
    if (predict(a, r.values) == samples[s].label) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return out;
}

inline std::span<const ImageSample> assignment_subset(const Dataset& d, const ExperimentConfig& cfg) {
  std::span<const ImageSample> all(d.train);
  if (cfg.train.assign_samples > 0 && cfg.train.assign_samples < all.size())
    return all.first(cfg.train.assign_samples);
  return all;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  double accuracy = 0.0;
  ClassAssignment assignment;
  std::size_t samples_seen = 0;
  std::vector<ExperimentRecord> records;
};

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t tag,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {kStreamShuffle, tag, epoch}));
  shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Unsupervised STDP training from the network's current weights. Keeps the
/// snapshot with the best test accuracy and leaves it in `net`.
inline TrainResult train_baseline(Network& net, const Dataset& data, const ExperimentConfig& cfg,
                                  const RecordSink& sink = {}) {
  cfg.validate();
  require(!data.train.empty() && !data.test.empty(), "train_baseline: empty dataset");
  TrainResult res;
  res.accuracy = -1.0;
  Network best = net;
  const auto assign_set = assignment_subset(data, cfg);
  auto checkpoint = [&] {
    auto a = assign_classes(net, assign_set, cfg);
    const double acc = evaluate(net, a, data.test, cfg).accuracy;
    const auto& pp = cfg.net.plasticity;
    ExperimentRecord rec{"baseline", res.samples_seen, acc,
                         compute_w_alpha(net.weights(), pp.alpha, pp.w_alpha_healthy_only), cfg.seed};
    res.records.push_back(rec);
    if (sink) sink(rec);
    if (acc > res.accuracy) {
      res.accuracy = acc;
      res.assignment = std::move(a);
      best = net;
    }
  };
  const std::size_t every = cfg.train.eval_every ? cfg.train.eval_every : data.train.size();
  std::size_t last_eval = std::numeric_limits<std::size_t>::max();
  const auto rule = cfg.train.rule;
  double w_alpha = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto order = epoch_order(data.train.size(), cfg.seed, kStreamTrain, epoch);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto idx = order[k];
      if (rule == LearningRule::kAStdp && res.samples_seen % cfg.repair.w_alpha_every == 0)
        w_alpha = compute_w_alpha(net.weights(), cfg.net.plasticity.alpha, cfg.net.plasticity.w_alpha_healthy_only);
      const bool degenerate = rule == LearningRule::kAStdp && !(w_alpha > 0.0);
      Rng rng(derive_seed(cfg.seed, {kStreamTrain, epoch, k}));
      net.present(poisson_encode(data.train[idx], cfg.encoder, rng), PresentMode::kLearn,
                  degenerate ? LearningRule::kStdp : rule, w_alpha);
      if (cfg.train.normalize_each_sample) normalize_weights(net.weights(), cfg.net.plasticity.w_norm);
      ++res.samples_seen;
      if (res.samples_seen % every == 0) {
        checkpoint();
        last_eval = res.samples_seen;
      }
    }
  }
  if (last_eval != res.samples_seen) checkpoint();
  net = std::move(best);
  return res;
}

// ---------------------------------------------------------------------------
// Faults and repair

struct FaultSpec {
  double p_del = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p_del >= 0.0 && p_del <= 1.0)) throw ValidationError("fault.p_del must lie in [0, 1]");
  }
};

/// Independently marks each healthy synapse faulty with probability p_del.
/// Faulty synapses read 0 from then on. Returns the number newly faulted.
inline std::size_t inject_faults(SynapseMatrix& w, const FaultSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {kStreamFault}));
  std::size_t n = 0;
  for (std::size_t i = 0; i < w.n_inputs(); ++i) {
    for (std::size_t j = 0; j < w.n_neurons(); ++j) {
      if (w.is_faulty(i, j)) continue;
      if (uniform01(rng) < spec.p_del) {
        w.mark_faulty(i, j);
        ++n;
      }
    }
  }
  return n;
}

struct RepairResult {
  LearningRule rule = LearningRule::kStdp;
  double accuracy = 0.0;  ///< 1-epoch accuracy for STDP, best accuracy for A-STDP
  ClassAssignment assignment;
  std::vector<ExperimentRecord> records;
  std::size_t samples_seen = 0;
  std::size_t w_alpha_fallbacks = 0;  ///< batches run as STDP because w_alpha was 0
};

/// Renormalizes a damaged network and retrains it. STDP runs `stdp_epochs`
/// and reports the final accuracy; A-STDP runs up to `astdp_epochs` with
/// early stopping and reports (and keeps) its best evaluation. Classes are
/// re-assigned at every evaluation.
inline RepairResult repair(Network& net, const Dataset& data, LearningRule rule, const ExperimentConfig& cfg,
                           std::uint64_t repair_seed, const RecordSink& sink = {}) {
  cfg.validate();
  if (!net.weights().has_faults()) throw ProtocolError("repair: network has no faults; run fault injection first");
  require(!data.train.empty() && !data.test.empty(), "repair: empty dataset");
  const auto& pp = cfg.net.plasticity;
  const auto& rc = cfg.repair;
  normalize_weights(net.weights(), pp.w_norm);

  RepairResult res;
  res.rule = rule;
  res.accuracy = -1.0;
  const auto assign_set = assignment_subset(data, cfg);
  const std::string phase = rule == LearningRule::kAStdp ? "repair_astdp" : "repair_stdp";
  const std::size_t max_epochs = rule == LearningRule::kAStdp ? rc.astdp_epochs : rc.stdp_epochs;
  double w_alpha = compute_w_alpha(net.weights(), pp.alpha, pp.w_alpha_healthy_only);
  Network best = net;
  std::size_t since_best = 0;
  bool stop = false;
  double last_acc = 0.0;

  auto checkpoint = [&] {
    auto a = assign_classes(net, assign_set, cfg);
    const double acc = evaluate(net, a, data.test, cfg).accuracy;
    ExperimentRecord rec{phase, res.samples_seen, acc,
                         compute_w_alpha(net.weights(), pp.alpha, pp.w_alpha_healthy_only), repair_seed};
    res.records.push_back(rec);
    if (sink) sink(rec);
    last_acc = acc;
    if (acc > res.accuracy) {
      res.accuracy = acc;
      res.assignment = a;
      best = net;
      since_best = 0;
    } else if (++since_best >= rc.patience && rule == LearningRule::kAStdp) {
      stop = true;
    }
    if (rule == LearningRule::kStdp) res.assignment = std::move(a);
  };

  for (std::size_t epoch = 0; epoch < max_epochs && !stop; ++epoch) {
    const auto order = epoch_order(data.train.size(), repair_seed, kStreamRepair, epoch);
    for (std::size_t k = 0; k < order.size() && !stop; ++k) {
      if (rule == LearningRule::kAStdp && k % rc.w_alpha_every == 0) {
        w_alpha = compute_w_alpha(net.weights(), pp.alpha, pp.w_alpha_healthy_only);
        if (!(w_alpha > 0.0)) ++res.w_alpha_fallbacks;
      }
      const bool degenerate = rule == LearningRule::kAStdp && !(w_alpha > 0.0);
      Rng rng(derive_seed(repair_seed, {kStreamRepair, epoch, k}));
      net.present(poisson_encode(data.train[order[k]], cfg.encoder, rng), PresentMode::kLearn,
                  degenerate ? LearningRule::kStdp : rule, w_alpha);
      if (rc.normalize_each_sample) normalize_weights(net.weights(), pp.w_norm);
      ++res.samples_seen;
      if (res.samples_seen % rc.eval_every == 0) checkpoint();
    }
    if (res.samples_seen % rc.eval_every != 0 && !stop) checkpoint();
  }
  if (rule == LearningRule::kAStdp) {
    net = std::move(best);
  } else {
    res.accuracy = last_acc;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Suite

struct SuiteConfig {
  std::vector<double> p_del = {0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t n_seeds = 3;
  std::size_t jobs = 1;
};

struct SuiteRow {
  std::string dataset;
  std::size_t n_neurons = 0;
  double p_del = 0.0;
  std::uint64_t seed = 0;
  double acc_baseline = 0.0;
  double acc_post_fault = 0.0;
  double acc_post_norm = 0.0;
  double acc_stdp_retrain = 0.0;
  double acc_astdp_retrain = 0.0;
  std::vector<ExperimentRecord> stdp_series;
  std::vector<ExperimentRecord> astdp_series;
};

/// Mean over neurons of the cosine similarity between a neuron's weights in
/// `before` and `after`, restricted to the coordinates healthy in `after`.
/// Neurons with a zero vector on either side count as 0.
inline double representation_similarity(const SynapseMatrix& before, const SynapseMatrix& after) {
  require(before.n_inputs() == after.n_inputs() && before.n_neurons() == after.n_neurons(),
          "representation_similarity: shape mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < after.n_neurons(); ++j) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < after.n_inputs(); ++i) {
      if (after.is_faulty(i, j)) continue;
      const double a = before(i, j), b = after(i, j);
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
    if (na > 0.0 && nb > 0.0) total += dot / std::sqrt(na * nb);
  }
  return total / static_cast<double>(after.n_neurons());
}

/// Sees every finished suite cell with its baseline and both repaired
/// networks. Calls are serialized.
using CellObserver =
    std::function<void(const SuiteRow&, const Network& baseline, const Network& stdp, const Network& astdp)>;

/// Post-fault and post-normalization accuracy under the baseline labelling.
struct FaultOutcome {
  double acc_post_fault = 0.0;
  double acc_post_norm = 0.0;
};

inline FaultOutcome fault_and_measure(Network& net, const ClassAssignment& baseline_assignment,
                                      const Dataset& data, const ExperimentConfig& cfg, const FaultSpec& spec) {
  inject_faults(net.weights(), spec);
  FaultOutcome out;
  out.acc_post_fault = evaluate(net, baseline_assignment, data.test, cfg).accuracy;
  Network normalized = net;
  normalize_weights(normalized.weights(), cfg.net.plasticity.w_norm);
  out.acc_post_norm = evaluate(normalized, baseline_assignment, data.test, cfg).accuracy;
  return out;
}

/// Runs every (p_del, seed) cell from a trained baseline. Cells are
/// independent and may run concurrently; results come back in cell order.
inline std::vector<SuiteRow> run_suite(const Network& baseline, const ClassAssignment& assignment,
                                       double acc_baseline, const Dataset& data, const ExperimentConfig& cfg,
                                       const SuiteConfig& suite, const std::string& dataset_name,
                                       const RecordSink& sink = {}, const CellObserver& observer = {}) {
  cfg.validate();
  for (double p : suite.p_del) FaultSpec{p, 0}.validate();
  const std::size_t n_cells = suite.p_del.size() * suite.n_seeds;
  std::vector<SuiteRow> rows(n_cells);
  std::mutex sink_mutex;
  auto run_cell = [&](std::size_t cell) {
    const double p = suite.p_del[cell / suite.n_seeds];
    const std::uint64_t seed = cfg.seed + cell % suite.n_seeds;
    SuiteRow& row = rows[cell];
    row.dataset = dataset_name;
    row.n_neurons = cfg.net.n_neurons;
    row.p_del = p;
    row.seed = seed;
    row.acc_baseline = acc_baseline;
    Network damaged = baseline;
    const FaultSpec spec{p, derive_seed(seed, {kStreamFault, static_cast<std::uint64_t>(std::llround(p * 1e6))})};
    const auto fo = fault_and_measure(damaged, assignment, data, cfg, spec);
    row.acc_post_fault = fo.acc_post_fault;
    row.acc_post_norm = fo.acc_post_norm;
    RecordSink cell_sink;
    if (sink)
      cell_sink = [&](const ExperimentRecord& r) {
        std::lock_guard lock(sink_mutex);
        sink(r);
      };
    Network s = damaged;
    auto rs = repair(s, data, LearningRule::kStdp, cfg, seed, cell_sink);
    row.acc_stdp_retrain = rs.accuracy;
    row.stdp_series = std::move(rs.records);
    Network a = damaged;
    auto ra = repair(a, data, LearningRule::kAStdp, cfg, seed, cell_sink);
    row.acc_astdp_retrain = ra.accuracy;
    row.astdp_series = std::move(ra.records);
    if (observer) {
      std::lock_guard lock(sink_mutex);
      observer(row, baseline, s, a);
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(suite.jobs, n_cells));
  if (jobs == 1) {
    for (std::size_t c = 0; c < n_cells; ++c) run_cell(c);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= n_cells) return;
        try {
          run_cell(c);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n_cells;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace astrosnn
