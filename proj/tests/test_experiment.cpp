#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "astrosnn/astrosnn.hpp"
#include "support.hpp"

using namespace astrosnn;

namespace {

ExperimentConfig small_config(std::size_t n_neurons = 20) {
  ExperimentConfig cfg;
  cfg.net.n_neurons = n_neurons;
  cfg.train.epochs = 1;
  cfg.repair.astdp_epochs = 1;
  cfg.repair.stdp_epochs = 1;
  cfg.repair.eval_every = 100;
  cfg.seed = 3;
  return cfg;
}

Dataset synthetic_dataset(std::size_t n_train, std::size_t n_test) {
  return {testsupport::synthetic_samples(n_train, 21), testsupport::synthetic_samples(n_test, 22)};
}

/// Trained once and shared: a 20-neuron network on the synthetic blocks.
struct Trained {
  ExperimentConfig cfg = small_config();
  Dataset data = synthetic_dataset(300, 100);
  Network net;
  TrainResult result;
  Trained() : net(cfg.net) {
    net.initialize_weights(cfg.seed);
    result = train_baseline(net, data, cfg);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

// --- labelling and prediction ----------------------------------------------

TEST(Assignment, ArgmaxWithTiesToLowestClass) {
  std::vector<double> r(3 * kNumClasses, 0.0);
  r[0 * 10 + 4] = 2.0;
  r[1 * 10 + 2] = 1.0;
  r[1 * 10 + 7] = 1.0;  // tie between 2 and 7
  const auto a = assignment_from_responses(r);
  EXPECT_EQ(a.neuron_class, (std::vector<std::uint8_t>{4, 2, 0}));
  EXPECT_EQ(a.silent_count(), 1u);
}

TEST(Assignment, RejectsRaggedResponse) { EXPECT_THROW(assignment_from_responses({1.0, 2.0}), ContractViolation); }

TEST(Predict, ClassMeanOverAssignedNeurons) {
  ClassAssignment a;
  a.neuron_class = {1, 1, 3};
  a.response.assign(30, 0.0);
  // Class 1 mean (10 + 0) / 2 = 5 < class 3 mean 6.
  EXPECT_EQ(predict(a, std::vector<double>{10.0, 0.0, 6.0}), 3u);
  EXPECT_EQ(predict(a, std::vector<double>{10.0, 4.0, 6.0}), 1u);
}

TEST(Predict, EmptyClassesScoreZeroAndTiesGoLow) {
  ClassAssignment a;
  a.neuron_class = {5, 8};
  a.response.assign(20, 0.0);
  EXPECT_EQ(predict(a, std::vector<double>{3.0, 3.0}), 5u);
  // All-negative responses (current fallback) lose to an empty class at 0.
  EXPECT_EQ(predict(a, std::vector<double>{-1.0, -2.0}), 0u);
  EXPECT_EQ(predict(a, std::vector<double>{0.0, 0.0}), 0u);
  EXPECT_THROW(predict(a, std::vector<double>{1.0}), ContractViolation);
}

TEST(Predict, OneHotResponsesAreClassifiedPerfectly) {
  ClassAssignment a;
  for (std::size_t j = 0; j < 30; ++j) a.neuron_class.push_back(static_cast<std::uint8_t>(j % 10));
  a.response.assign(300, 0.0);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<double> r(30, 0.0);
    r[c] = 7.0;
    EXPECT_EQ(predict(a, r), c);
  }
}

TEST(Predict, RandomResponsesScoreNearChance) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> cls(0, 9);
  std::poisson_distribution<int> spikes(2.0);
  ClassAssignment a;
  for (int j = 0; j < 50; ++j) a.neuron_class.push_back(static_cast<std::uint8_t>(cls(rng)));
  a.response.assign(500, 0.0);
  const int n = 20000;
  int correct = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<double> r(50);
    for (auto& x : r) x = spikes(rng);
    correct += predict(a, r) == static_cast<std::size_t>(cls(rng)) ? 1 : 0;
  }
  const double acc = static_cast<double>(correct) / n;
  EXPECT_NEAR(acc, 0.1, 3.0 * std::sqrt(0.09 / n));
}

TEST(Inference, SilentNetworkFallsBackToInputCurrent) {
  auto cfg = small_config(5);
  Network net(cfg.net);
  const auto img = testsupport::synthetic_samples(1, 1)[0];
  const auto r = infer_response(net, img, cfg, 7);  // weights are all zero
  EXPECT_TRUE(r.used_current);
  ASSERT_EQ(r.values.size(), 5u);
  for (double v : r.values) EXPECT_EQ(v, 0.0);

  ClassAssignment a = assignment_from_responses(std::vector<double>(50, 0.0));
  const auto samples = testsupport::synthetic_samples(20, 2);
  const auto ev = evaluate(net, a, samples, cfg);
  EXPECT_EQ(ev.current_fallbacks, 20u);
  EXPECT_NEAR(ev.accuracy, 0.1, 1e-12);  // every prediction is class 0
}

TEST(Inference, CurrentFallbackRanksByDrive) {
  auto cfg = small_config(2);
  cfg.net.lif.theta_0 = 1e6;  // never fires
  Network net(cfg.net);
  std::vector<double> w(kImagePixels * 2, 0.0);
  for (std::size_t i = 0; i < kImagePixels; ++i) w[i * 2 + 1] = 0.05;
  net.weights().assign(w, std::vector<std::uint8_t>(w.size(), 0));
  const auto img = testsupport::synthetic_samples(1, 1)[0];
  const auto r = infer_response(net, img, cfg, 7);
  EXPECT_TRUE(r.used_current);
  EXPECT_EQ(r.values[0], 0.0);
  EXPECT_GT(r.values[1], 0.0);
}

TEST(Inference, FreezesWeightsAndThresholds) {
  const auto& t = trained();
  Network net = t.net;
  const auto before_w = net.weights();
  const auto before_theta = net.state().theta;
  evaluate(net, t.result.assignment, t.data.test, t.cfg);
  EXPECT_TRUE(net.weights() == before_w);
  EXPECT_EQ(net.state().theta, before_theta);
}

// --- training ---------------------------------------------------------------

TEST(Training, LearnsSeparableBlocksWellAboveChance) {
  const auto& t = trained();
  EXPECT_GT(t.result.accuracy, 0.6);
  EXPECT_EQ(t.result.samples_seen, 300u);
  ASSERT_FALSE(t.result.records.empty());
  EXPECT_EQ(t.result.records.back().phase, "baseline");
  EXPECT_TRUE(t.net.weights().in_bounds());
}

TEST(Training, DeterministicForSeed) {
  auto cfg = small_config(10);
  const auto data = synthetic_dataset(60, 20);
  Network a(cfg.net), b(cfg.net);
  a.initialize_weights(cfg.seed);
  b.initialize_weights(cfg.seed);
  const auto ra = train_baseline(a, data, cfg);
  const auto rb = train_baseline(b, data, cfg);
  EXPECT_TRUE(a.weights() == b.weights());
  EXPECT_EQ(ra.assignment, rb.assignment);
  EXPECT_EQ(ra.accuracy, rb.accuracy);
}

TEST(Training, ZeroEpochsStillEvaluatesOnce) {
  auto cfg = small_config(10);
  cfg.train.epochs = 0;
  const auto data = synthetic_dataset(30, 20);
  Network net(cfg.net);
  net.initialize_weights(cfg.seed);
  const auto r = train_baseline(net, data, cfg);
  EXPECT_EQ(r.samples_seen, 0u);
  EXPECT_EQ(r.records.size(), 1u);
}

TEST(Training, AstdpWithZeroSigmaIsBitIdenticalToStdp) {
  auto cfg = small_config(10);
  cfg.net.plasticity.sigma = 0.0;
  const auto data = synthetic_dataset(120, 20);
  Network a(cfg.net), b(cfg.net);
  a.initialize_weights(cfg.seed);
  b.initialize_weights(cfg.seed);
  auto cfg_astdp = cfg;
  cfg_astdp.train.rule = LearningRule::kAStdp;
  train_baseline(a, data, cfg);
  train_baseline(b, data, cfg_astdp);
  ASSERT_EQ(a.weights().size(), b.weights().size());
  EXPECT_EQ(std::memcmp(a.weights().data().data(), b.weights().data().data(), a.weights().size() * sizeof(double)), 0);
  EXPECT_EQ(a.state().theta, b.state().theta);
}

TEST(Training, EpochOrderIsASeededPermutation) {
  const auto o = epoch_order(100, 5, kStreamTrain, 0);
  EXPECT_EQ(std::set<std::size_t>(o.begin(), o.end()).size(), 100u);
  EXPECT_EQ(o, epoch_order(100, 5, kStreamTrain, 0));
  EXPECT_NE(o, epoch_order(100, 5, kStreamTrain, 1));
  EXPECT_NE(o, epoch_order(100, 6, kStreamTrain, 0));
}

// --- faults -----------------------------------------------------------------

TEST(Faults, ZeroAndOneProbability) {
  SynapseMatrix w(784, 10, 1.0);
  EXPECT_EQ(inject_faults(w, {0.0, 1}), 0u);
  EXPECT_FALSE(w.has_faults());
  EXPECT_EQ(inject_faults(w, {1.0, 1}), 7840u);
  for (double x : w.data()) EXPECT_EQ(x, 0.0);
}

TEST(Faults, BinomialCountAndZeroedValues) {
  SynapseMatrix w(784, 100, 1.0);
  for (std::size_t i = 0; i < 784; ++i)
    for (std::size_t j = 0; j < 100; ++j) w.set(i, j, 0.5);
  const double n = 78400.0, p = 0.8;
  const auto k = inject_faults(w, {p, 42});
  EXPECT_LT(std::abs(static_cast<double>(k) - n * p), 3.0 * std::sqrt(n * p * (1 - p)));
  EXPECT_EQ(k, w.fault_count());
  for (std::size_t i = 0; i < 784; ++i)
    for (std::size_t j = 0; j < 100; ++j) {
      if (w.is_faulty(i, j)) {
        EXPECT_EQ(w(i, j), 0.0);
      } else {
        EXPECT_EQ(w(i, j), 0.5);
      }
    }
}

TEST(Faults, DeterministicAndCumulative) {
  SynapseMatrix a(100, 10, 1.0), b(100, 10, 1.0), c(100, 10, 1.0);
  inject_faults(a, {0.3, 9});
  inject_faults(b, {0.3, 9});
  inject_faults(c, {0.3, 10});
  EXPECT_TRUE(std::equal(a.fault_mask().begin(), a.fault_mask().end(), b.fault_mask().begin()));
  EXPECT_FALSE(std::equal(a.fault_mask().begin(), a.fault_mask().end(), c.fault_mask().begin()));
  const auto before = a.fault_count();
  const auto added = inject_faults(a, {0.3, 11});
  EXPECT_EQ(a.fault_count(), before + added);
}

TEST(Faults, InvalidProbabilityRejected) {
  SynapseMatrix w(10, 2, 1.0);
  EXPECT_THROW(inject_faults(w, {1.5, 1}), ValidationError);
  EXPECT_THROW(inject_faults(w, {-0.1, 1}), ValidationError);
}

// --- repair -----------------------------------------------------------------

TEST(Repair, WithoutFaultsIsProtocolError) {
  const auto& t = trained();
  Network net = t.net;
  EXPECT_THROW(repair(net, t.data, LearningRule::kAStdp, t.cfg, 1), ProtocolError);
}

TEST(Repair, FaultMaskPersistsExhaustively) {
  const auto& t = trained();
  for (auto rule : {LearningRule::kStdp, LearningRule::kAStdp}) {
    Network net = t.net;
    inject_faults(net.weights(), {0.6, 5});
    const std::vector<std::uint8_t> mask(net.weights().fault_mask().begin(), net.weights().fault_mask().end());
    const auto res = repair(net, t.data, rule, t.cfg, 17);
    EXPECT_GT(res.samples_seen, 0u);
    const auto& w = net.weights();
    ASSERT_TRUE(std::equal(mask.begin(), mask.end(), w.fault_mask().begin()));
    for (std::size_t i = 0; i < w.n_inputs(); ++i)
      for (std::size_t j = 0; j < w.n_neurons(); ++j) {
        if (mask[i * w.n_neurons() + j]) { ASSERT_EQ(w(i, j), 0.0); }
      }
  }
}

TEST(Repair, RecordsCarryPhaseAndRepairSeed) {
  const auto& t = trained();
  Network net = t.net;
  inject_faults(net.weights(), {0.5, 5});
  std::vector<ExperimentRecord> sunk;
  const auto res = repair(net, t.data, LearningRule::kStdp, t.cfg, 23, [&](const ExperimentRecord& r) { sunk.push_back(r); });
  ASSERT_EQ(sunk.size(), res.records.size());
  ASSERT_EQ(res.records.size(), 3u);  // every 100 samples over one 300-sample epoch
  for (const auto& r : res.records) {
    EXPECT_EQ(r.phase, "repair_stdp");
    EXPECT_EQ(r.seed, 23u);
  }
  EXPECT_EQ(res.accuracy, res.records.back().test_accuracy);
}

TEST(Repair, AstdpKeepsBestEvaluation) {
  const auto& t = trained();
  Network net = t.net;
  inject_faults(net.weights(), {0.8, 5});
  auto cfg = t.cfg;
  cfg.repair.astdp_epochs = 2;
  cfg.repair.eval_every = 50;
  cfg.repair.patience = 100;
  const auto res = repair(net, t.data, LearningRule::kAStdp, cfg, 31);
  double best = -1.0;
  for (const auto& r : res.records) best = std::max(best, r.test_accuracy);
  EXPECT_EQ(res.accuracy, best);
  // The returned network is the best snapshot: re-evaluating reproduces it.
  auto a = assign_classes(net, assignment_subset(t.data, cfg), cfg);
  EXPECT_EQ(evaluate(net, a, t.data.test, cfg).accuracy, best);
}

TEST(Repair, ZeroSigmaAstdpMatchesStdp) {
  const auto& t = trained();
  auto cfg = t.cfg;
  cfg.net.plasticity.sigma = 0.0;
  cfg.repair.eval_every = 100000;  // one evaluation at the end of the epoch
  Network a = t.net;
  a.config().plasticity.sigma = 0.0;
  inject_faults(a.weights(), {0.7, 5});
  Network b = a;
  const auto rs = repair(a, t.data, LearningRule::kStdp, cfg, 8);
  const auto ra = repair(b, t.data, LearningRule::kAStdp, cfg, 8);
  EXPECT_TRUE(a.weights() == b.weights());
  EXPECT_EQ(rs.accuracy, ra.accuracy);
  EXPECT_EQ(ra.w_alpha_fallbacks, 0u);
}

TEST(Repair, EveryWeightFaultedFallsBackToStdp) {
  const auto& t = trained();
  Network net = t.net;
  inject_faults(net.weights(), {1.0, 5});
  auto cfg = t.cfg;
  cfg.repair.eval_every = 100000;
  const auto res = repair(net, t.data, LearningRule::kAStdp, cfg, 8);
  EXPECT_GT(res.w_alpha_fallbacks, 0u);
  for (double x : net.weights().data()) EXPECT_EQ(x, 0.0);
}

// --- suite ------------------------------------------------------------------

TEST(Suite, DeterministicAcrossJobCounts) {
  const auto& t = trained();
  auto cfg = t.cfg;
  cfg.repair.eval_every = 150;
  SuiteConfig sc{{0.5, 0.8}, 2, 1};
  const auto serial = run_suite(t.net, t.result.assignment, t.result.accuracy, t.data, cfg, sc, "synthetic");
  sc.jobs = 3;
  const auto parallel = run_suite(t.net, t.result.assignment, t.result.accuracy, t.data, cfg, sc, "synthetic");
  std::ostringstream a, b;
  write_suite_csv(a, serial);
  write_suite_csv(b, parallel);
  EXPECT_EQ(a.str(), b.str());
  ASSERT_EQ(serial.size(), 4u);
  EXPECT_EQ(serial[0].seed, cfg.seed);
  EXPECT_EQ(serial[1].seed, cfg.seed + 1);
  EXPECT_EQ(serial[2].p_del, 0.8);
  for (const auto& r : serial) {
    EXPECT_EQ(r.acc_baseline, t.result.accuracy);
    EXPECT_FALSE(r.stdp_series.empty());
    EXPECT_FALSE(r.astdp_series.empty());
  }
}

TEST(Suite, SingleSeedHasZeroSpreadAndObserverSeesCells) {
  const auto& t = trained();
  auto cfg = t.cfg;
  cfg.repair.eval_every = 150;
  SuiteConfig sc{{0.9}, 1, 1};
  std::size_t seen = 0;
  const auto rows = run_suite(t.net, t.result.assignment, t.result.accuracy, t.data, cfg, sc, "synthetic", {},
                              [&](const SuiteRow& row, const Network& base, const Network& s, const Network& a) {
                                ++seen;
                                EXPECT_EQ(row.p_del, 0.9);
                                EXPECT_TRUE(base.weights() == t.net.weights());
                                EXPECT_TRUE(std::equal(s.weights().fault_mask().begin(), s.weights().fault_mask().end(),
                                                       a.weights().fault_mask().begin()));
                              });
  EXPECT_EQ(seen, 1u);
  const auto stats = summarize_suite(rows);
  ASSERT_EQ(stats.size(), 1u);
  for (double sd : stats[0].sd) EXPECT_EQ(sd, 0.0);
  EXPECT_EQ(stats[0].gain(), rows[0].acc_astdp_retrain - rows[0].acc_post_norm);
}

TEST(Suite, StatsUseSampleStandardDeviation) {
  std::vector<SuiteRow> rows(3);
  const double v[3] = {0.5, 0.6, 0.7};
  for (int k = 0; k < 3; ++k) {
    rows[k].p_del = 0.5;
    rows[k].acc_astdp_retrain = v[k];
  }
  const auto s = summarize_suite(rows);
  EXPECT_NEAR(s[0].mean[3], 0.6, 1e-12);
  EXPECT_NEAR(s[0].sd[3], 0.1, 1e-12);
}

// --- representation similarity ---------------------------------------------

TEST(Similarity, IdentityScaleAndOrthogonality) {
  SynapseMatrix a(4, 2, 10.0), b(4, 2, 10.0);
  a.assign({1, 0, 2, 0, 0, 1, 0, 1}, std::vector<std::uint8_t>(8, 0));
  EXPECT_NEAR(representation_similarity(a, a), 1.0, 1e-12);
  b.assign({3, 0, 6, 0, 0, 2, 0, 2}, std::vector<std::uint8_t>(8, 0));
  EXPECT_NEAR(representation_similarity(a, b), 1.0, 1e-12);
  // Neuron 0 becomes orthogonal, neuron 1 goes silent.
  b.assign({0, 0, 0, 0, 5, 0, 0, 0}, std::vector<std::uint8_t>(8, 0));
  EXPECT_NEAR(representation_similarity(a, b), 0.0, 1e-12);
}

TEST(Similarity, IgnoresFaultedCoordinates) {
  SynapseMatrix before(3, 1, 10.0), after(3, 1, 10.0);
  before.assign({1, 1, 9}, {0, 0, 0});
  after.assign({2, 2, 0}, {0, 0, 1});
  EXPECT_NEAR(representation_similarity(before, after), 1.0, 1e-12);
  SynapseMatrix other(2, 1, 10.0);
  EXPECT_THROW(representation_similarity(before, other), ContractViolation);
}
