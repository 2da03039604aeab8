#include <gtest/gtest.h>

#include <sstream>

#include "astrosnn/astrosnn.hpp"
#include "support.hpp"

using namespace astrosnn;

namespace {

std::string validation_message(const RunConfig& c) {
  try {
    c.validate();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

Checkpoint sample_checkpoint(bool with_faults, bool with_assignment) {
  auto cfg = default_config();
  cfg.exp.net.n_neurons = 12;
  Network net(cfg.exp.net);
  net.initialize_weights(5);
  if (with_faults) inject_faults(net.weights(), {0.4, 3});
  for (std::size_t j = 0; j < 12; ++j) net.state().theta[j] = 0.1 * static_cast<double>(j) + 1e-9;
  std::optional<ClassAssignment> a;
  if (with_assignment) {
    std::vector<double> r(120);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = static_cast<double>((k * 37) % 11) / 3.0;
    a = assignment_from_responses(r);
  }
  auto c = make_checkpoint(cfg, net, a);
  c.rng_cursor = 12345;
  c.set_metric("acc_baseline", 0.875);
  c.set_metric("acc_post_fault", 1.0 / 3.0);
  return c;
}

}  // namespace

// --- defaults ---------------------------------------------------------------

TEST(ConfigDefaults, MnistMatchesReferenceHyperparameters) {
  const auto c = default_config("mnist");
  const auto& n = c.exp.net;
  EXPECT_EQ(n.lif.tau_mem, 100.0);
  EXPECT_EQ(n.tau_trace, 20.0);
  EXPECT_EQ(n.lif.v_rest, -65.0);
  EXPECT_EQ(n.lif.theta_0, -52.0);
  EXPECT_EQ(n.lif.v_reset, -60.0);
  EXPECT_EQ(n.lif.delta_ref, 5.0);
  EXPECT_EQ(n.lif.tau_theta, 1e7);
  EXPECT_EQ(n.lif.theta_plus, 0.05);
  EXPECT_EQ(n.plasticity.eta_post, 1e-2);
  EXPECT_EQ(n.plasticity.eta_pre, 1e-4);
  EXPECT_EQ(n.plasticity.w_norm, 78.4);
  EXPECT_EQ(n.n_neurons, 225u);
  EXPECT_EQ(n.inhibition.w_recurrent, -120.0);
  EXPECT_EQ(n.plasticity.alpha, 98.0);
  EXPECT_EQ(n.plasticity.sigma, 2.0);
  EXPECT_EQ(n.lif.dt, 1.0);
  EXPECT_FALSE(c.data.sobel);
  EXPECT_EQ(c.exp.encoder.max_rate, 128.0);
  EXPECT_EQ(c.exp.encoder.duration, 250.0);
  EXPECT_EQ(c.exp.train.epochs, 2u);
  EXPECT_NO_THROW(c.validate());
}

TEST(ConfigDefaults, FashionSwitchesDatasetDependentValues) {
  const auto c = default_config("fmnist");
  EXPECT_EQ(c.exp.net.plasticity.eta_post, 4e-3);
  EXPECT_EQ(c.exp.net.plasticity.eta_pre, 4e-5);
  EXPECT_EQ(c.exp.net.inhibition.w_recurrent, -250.0);
  EXPECT_TRUE(c.data.sobel);
  EXPECT_EQ(c.exp.net.n_neurons, 400u);
  // Dataset-independent values are untouched.
  EXPECT_EQ(c.exp.net.plasticity.w_norm, 78.4);
  EXPECT_EQ(c.exp.net.lif.theta_plus, 0.05);
}

TEST(ConfigDefaults, DatasetInConfigTextSelectsDefaultsBeforeOverrides) {
  const auto c = config_from_string("[plasticity]\neta_post = 0.02\n[run]\ndataset = fmnist\n");
  EXPECT_EQ(c.exp.net.plasticity.eta_post, 0.02);
  EXPECT_EQ(c.exp.net.inhibition.w_recurrent, -250.0);
  EXPECT_THROW(default_config("cifar"), ValidationError);
}

// --- parsing and validation -------------------------------------------------

TEST(Config, ZeroNeuronsIsNamedValidationError) {
  const auto c = config_from_string("[run]\nn_neurons = 0\n");
  EXPECT_NE(validation_message(c).find("run.n_neurons"), std::string::npos);
}

TEST(Config, UnknownKeyAndMalformedLinesRejected) {
  EXPECT_THROW(config_from_string("[run]\nbogus = 1\n"), ValidationError);
  EXPECT_THROW(config_from_string("[run]\nseed 1\n"), ValidationError);
  EXPECT_THROW(config_from_string("seed = 1\n"), ValidationError);
  EXPECT_THROW(config_from_string("[run\nseed = 1\n"), ValidationError);
  EXPECT_THROW(config_from_string("[run]\nseed = -3\n"), ValidationError);
  EXPECT_THROW(config_from_string("[lif]\ntau_mem = fast\n"), ValidationError);
  try {
    config_from_string("[run]\nseed = 1\n\n[lif]\nnope = 2\n", "my.ini");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("my.ini:5"), std::string::npos) << e.what();
  }
}

TEST(Config, FieldValidationNamesTheField) {
  EXPECT_NE(validation_message(config_from_string("[fault]\np_del = 1.5\n")).find("fault.p_del"), std::string::npos);
  EXPECT_NE(validation_message(config_from_string("[plasticity]\nalpha = 0\n")).find("plasticity.alpha"),
            std::string::npos);
  EXPECT_NE(validation_message(config_from_string("[lif]\ntau_mem = 0\n")).find("lif.tau_mem"), std::string::npos);
  EXPECT_FALSE(validation_message(config_from_string("[encoder]\nmax_rate = 5000\n")).empty());
  EXPECT_FALSE(validation_message(config_from_string("[suite]\nn_seeds = 0\n")).empty());
}

TEST(Config, OverridesAndRoundTripThroughText) {
  auto c = default_config();
  apply_entries(c, {parse_override("run.seed=9"), parse_override("suite.p_del=0.5,0.9"),
                    parse_override("repair.rule=stdp"), parse_override("train.rule=astdp")});
  EXPECT_EQ(c.exp.seed, 9u);
  EXPECT_EQ(c.suite.p_del, (std::vector<double>{0.5, 0.9}));
  EXPECT_EQ(c.repair_rule, LearningRule::kStdp);
  EXPECT_EQ(c.exp.train.rule, LearningRule::kAStdp);
  const auto text = config_to_string(c);
  EXPECT_EQ(config_to_string(config_from_string(text)), text);
  EXPECT_THROW(parse_override("noseparator"), ValidationError);
}

TEST(Config, EveryFieldSurvivesTextRoundTrip) {
  auto c = default_config();
  c.exp.net.lif.tau_mem = 0.1 + 0.2;  // not exactly representable in short decimal
  c.exp.net.plasticity.eta_post = 1.0 / 3.0;
  c.astro.m_esp = 123.456789012345;
  const auto back = config_from_string(config_to_string(c));
  EXPECT_EQ(back.exp.net.lif.tau_mem, c.exp.net.lif.tau_mem);
  EXPECT_EQ(back.exp.net.plasticity.eta_post, c.exp.net.plasticity.eta_post);
  EXPECT_EQ(back.astro.m_esp, c.astro.m_esp);
}

// --- checkpoints ------------------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (bool faults : {false, true})
    for (bool assignment : {false, true}) {
      const auto bytes = serialize_checkpoint(sample_checkpoint(faults, assignment));
      const auto loaded = parse_checkpoint(bytes);
      EXPECT_EQ(serialize_checkpoint(loaded), bytes) << faults << assignment;
      EXPECT_EQ(loaded.assignment.has_value(), assignment);
      EXPECT_EQ(loaded.weights.has_faults(), faults);
    }
}

TEST(Checkpoint, RestoresNetworkStateExactly) {
  const auto c = sample_checkpoint(true, true);
  const auto dir = testsupport::scratch_dir("ckpt");
  save_checkpoint(dir / "c.bin", c);
  const auto back = load_checkpoint(dir / "c.bin");
  EXPECT_TRUE(back.weights == c.weights);
  EXPECT_EQ(back.theta, c.theta);
  EXPECT_EQ(*back.assignment, *c.assignment);
  EXPECT_EQ(back.rng_cursor, 12345u);
  EXPECT_EQ(back.metric("acc_post_fault"), 1.0 / 3.0);
  EXPECT_FALSE(back.metric("missing").has_value());
  const auto net = restore_network(back, back.config);
  EXPECT_TRUE(net.weights() == c.weights);
  EXPECT_EQ(net.state().theta, c.theta);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptInputsAreParseErrors) {
  const auto good = serialize_checkpoint(sample_checkpoint(true, true));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), ParseError);
  auto bad_version = good;
  bad_version[8] = 99;
  EXPECT_THROW(parse_checkpoint(bad_version), ParseError);
  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, good.size() / 2, good.size() - 1})
    EXPECT_THROW(parse_checkpoint(std::span(good).first(cut)), ParseError) << cut;
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(parse_checkpoint(trailing), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), ParseError);
}

// --- weight maps ------------------------------------------------------------

TEST(WeightMap, SquareTileGrid) {
  SynapseMatrix w(784, 225, 1.0);
  for (std::size_t j = 0; j < 225; ++j) w.set(0, j, 0.5);
  w.set(783, 224, 1.0);
  const auto pgm = weights_to_pgm(w);
  const std::string header = "P5\n420 420\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 420u * 420u);
  EXPECT_EQ(std::string(pgm.begin(), pgm.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
  const auto* img = pgm.data() + header.size();
  EXPECT_EQ(img[0], 128);                        // neuron 0, pixel 0
  EXPECT_EQ(img[28], 128);                       // neuron 1 starts one tile to the right
  EXPECT_EQ(img[28 * 420], 128);                 // neuron 15 starts one tile down
  EXPECT_EQ(img[419 * 420 + 419], 255);          // neuron 224, last pixel
  EXPECT_EQ(img[1], 0);
}

TEST(WeightMap, NonSquareCountsRoundUpAndZeroWeightsAreBlack) {
  SynapseMatrix w(784, 10, 1.0);
  const auto pgm = weights_to_pgm(w);
  const std::string header = "P5\n112 112\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 112u * 112u);
  for (std::size_t k = header.size(); k < pgm.size(); ++k) ASSERT_EQ(pgm[k], 0);
}

// --- manifest ---------------------------------------------------------------

TEST(Manifest, RecordsCommandConfigAndHashes) {
  const auto dir = testsupport::scratch_dir("manifest");
  {
    std::ofstream(dir / "a.csv") << "x\n1\n";
  }
  auto cfg = default_config();
  cfg.exp.seed = 77;
  write_manifest(dir, "train", cfg, {"a.csv"});
  const auto info = read_manifest(dir / "manifest.ini");
  EXPECT_EQ(info.command, "train");
  ASSERT_EQ(info.artifacts.size(), 1u);
  EXPECT_EQ(info.artifacts[0].first, "a.csv");
  // SHA-256 of "x\n1\n" computed independently.
  EXPECT_EQ(info.artifacts[0].second, sha256_hex(std::vector<std::uint8_t>{'x', '\n', '1', '\n'}));
  EXPECT_EQ(sha256_hex(std::vector<std::uint8_t>{}),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto back = build_config(read_config_file(dir / "manifest.ini"));
  EXPECT_EQ(back.exp.seed, 77u);
  EXPECT_EQ(config_to_string(back), config_to_string(cfg));
  std::filesystem::remove_all(dir);
}
