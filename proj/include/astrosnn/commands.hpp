#pragma once

// The command-line workflows as library calls: each takes a resolved
// RunConfig, writes its artifacts plus a manifest into cfg.out_dir, and
// reports progress on `log`.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "astrosnn/astrocyte.hpp"
#include "astrosnn/checkpoint.hpp"
#include "astrosnn/config.hpp"
#include "astrosnn/experiment.hpp"
#include "astrosnn/io.hpp"

namespace astrosnn {

namespace cmd_detail {

inline void prepare(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
}

inline RecordSink progress(std::ostream& log) {
  return [&log](const ExperimentRecord& r) {
    log << r.phase << " samples=" << r.samples_seen << " acc=" << fmt_num(r.test_accuracy)
        << " w_alpha=" << fmt_num(r.w_alpha) << " seed=" << r.seed << '\n'
        << std::flush;
  };
}

inline Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ValidationError("run.checkpoint: this command needs an input checkpoint");
  return load_checkpoint(cfg.checkpoint);
}

template <typename F>
void write_text(const std::filesystem::path& path, F&& body) {
  auto os = open_output(path);
  body(os);
}

}  // namespace cmd_detail

/// Trains a baseline network and writes checkpoint.bin and train_records.csv.
inline TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  const auto data = load_dataset(cfg.data);
  log << "train: " << data.train.size() << " training / " << data.test.size() << " test samples, "
      << cfg.exp.net.n_neurons << " neurons\n";
  Network net(cfg.exp.net);
  net.initialize_weights(cfg.exp.seed);
  auto res = train_baseline(net, data, cfg.exp, cmd_detail::progress(log));
  auto ck = make_checkpoint(cfg, net, res.assignment);
  ck.rng_cursor = res.samples_seen;
  ck.set_metric("acc_baseline", res.accuracy);
  save_checkpoint(cfg.out_dir / "checkpoint.bin", ck);
  cmd_detail::write_text(cfg.out_dir / "train_records.csv",
                         [&](std::ostream& os) { write_records_csv(os, res.records); });
  write_manifest(cfg.out_dir, "train", cfg, {"checkpoint.bin", "train_records.csv"});
  log << "baseline accuracy " << fmt_num(res.accuracy) << '\n';
  if (const auto silent = res.assignment.silent_count())
    log << "note: " << silent << " neurons never fired during labelling and were given class 0\n";
  return res;
}

/// Injects faults into a trained checkpoint; records post-fault and
/// post-normalization accuracy under the baseline labelling.
inline FaultOutcome cmd_fault(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  auto ck = cmd_detail::require_checkpoint(cfg);
  if (!ck.assignment) throw ProtocolError("fault: checkpoint has no class assignment; train it first");
  const auto data = load_dataset(cfg.data);
  Network net = restore_network(ck, cfg);
  const auto before = net.weights().fault_count();
  const auto fo = fault_and_measure(net, *ck.assignment, data, cfg.exp, cfg.fault);
  const auto added = net.weights().fault_count() - before;
  ck.weights = net.weights();
  ck.config = cfg;
  ck.set_metric("p_del", cfg.fault.p_del);
  ck.set_metric("acc_post_fault", fo.acc_post_fault);
  ck.set_metric("acc_post_norm", fo.acc_post_norm);
  save_checkpoint(cfg.out_dir / "checkpoint_fault.bin", ck);
  cmd_detail::write_text(cfg.out_dir / "fault_metrics.csv", [&](std::ostream& os) {
    os << "p_del,fault_seed,faulty_synapses,acc_baseline,acc_post_fault,acc_post_norm\n";
    os << fmt_num(cfg.fault.p_del) << ',' << cfg.fault.seed << ',' << added << ','
       << fmt_num(ck.metric("acc_baseline").value_or(std::nan(""))) << ',' << fmt_num(fo.acc_post_fault) << ','
       << fmt_num(fo.acc_post_norm) << '\n';
  });
  write_manifest(cfg.out_dir, "fault", cfg, {"checkpoint_fault.bin", "fault_metrics.csv"});
  log << "fault: " << added << " synapses stuck at zero; accuracy post-fault " << fmt_num(fo.acc_post_fault)
      << ", post-normalization " << fmt_num(fo.acc_post_norm) << '\n';
  return fo;
}

/// Retrains a faulted checkpoint with cfg.repair_rule.
inline RepairResult cmd_repair(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  auto ck = cmd_detail::require_checkpoint(cfg);
  const auto data = load_dataset(cfg.data);
  Network net = restore_network(ck, cfg);
  auto res = repair(net, data, cfg.repair_rule, cfg.exp, cfg.exp.seed, cmd_detail::progress(log));
  const std::string tag = "repair_" + to_string(cfg.repair_rule);
  ck.config = cfg;
  ck.weights = net.weights();
  ck.theta = net.state().theta;
  ck.assignment = res.assignment;
  ck.rng_cursor = res.samples_seen;
  ck.set_metric("acc_" + to_string(cfg.repair_rule) + "_retrain", res.accuracy);
  save_checkpoint(cfg.out_dir / ("checkpoint_" + tag + ".bin"), ck);
  cmd_detail::write_text(cfg.out_dir / (tag + "_timeseries.csv"),
                         [&](std::ostream& os) { write_timeseries_csv(os, res.records); });
  cmd_detail::write_text(cfg.out_dir / (tag + "_summary.csv"), [&](std::ostream& os) {
    os << "rule,samples_seen,accuracy,w_alpha_fallbacks\n";
    os << to_string(cfg.repair_rule) << ',' << res.samples_seen << ',' << fmt_num(res.accuracy) << ','
       << res.w_alpha_fallbacks << '\n';
  });
  write_manifest(cfg.out_dir, "repair", cfg,
                 {"checkpoint_" + tag + ".bin", tag + "_timeseries.csv", tag + "_summary.csv"});
  if (res.w_alpha_fallbacks > 0)
    log << "warning: w_alpha was 0 for " << res.w_alpha_fallbacks << " batches; plain STDP was used for them\n";
  log << tag << " accuracy " << fmt_num(res.accuracy) << '\n';
  if (const auto silent = res.assignment.silent_count())
    log << "note: " << silent << " neurons never fired during labelling and were given class 0\n";
  return res;
}

/// Test accuracy of a checkpoint.
inline EvalResult cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  const auto ck = cmd_detail::require_checkpoint(cfg);
  const auto data = load_dataset(cfg.data);
  Network net = restore_network(ck, cfg);
  ClassAssignment a;
  if (cfg.reassign || !ck.assignment)
    a = assign_classes(net, assignment_subset(data, cfg.exp), cfg.exp);
  else
    a = *ck.assignment;
  const auto r = evaluate(net, a, data.test, cfg.exp);
  cmd_detail::write_text(cfg.out_dir / "eval.csv", [&](std::ostream& os) {
    os << "n_test,accuracy,current_fallbacks,reassigned\n";
    os << data.test.size() << ',' << fmt_num(r.accuracy) << ',' << r.current_fallbacks << ','
       << ((cfg.reassign || !ck.assignment) ? 1 : 0) << '\n';
  });
  write_manifest(cfg.out_dir, "eval", cfg, {"eval.csv"});
  log << "accuracy " << fmt_num(r.accuracy) << '\n';
  return r;
}

/// Baseline (trained here unless run.checkpoint is given) followed by every
/// (p_del, seed) fault/repair cell.
inline std::vector<SuiteRow> cmd_suite(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  const auto data = load_dataset(cfg.data);
  std::vector<std::string> artifacts;
  Network net;
  ClassAssignment assignment;
  double acc_baseline = 0.0;
  if (!cfg.checkpoint.empty()) {
    const auto ck = load_checkpoint(cfg.checkpoint);
    if (!ck.assignment) throw ProtocolError("suite: checkpoint has no class assignment");
    if (ck.weights.has_faults()) throw ProtocolError("suite: baseline checkpoint already has faults");
    net = restore_network(ck, cfg);
    assignment = *ck.assignment;
    acc_baseline = ck.metric("acc_baseline").value_or(evaluate(net, assignment, data.test, cfg.exp).accuracy);
  } else {
    net = Network(cfg.exp.net);
    net.initialize_weights(cfg.exp.seed);
    auto res = train_baseline(net, data, cfg.exp, cmd_detail::progress(log));
    assignment = res.assignment;
    acc_baseline = res.accuracy;
    auto ck = make_checkpoint(cfg, net, assignment);
    ck.rng_cursor = res.samples_seen;
    ck.set_metric("acc_baseline", acc_baseline);
    save_checkpoint(cfg.out_dir / "checkpoint.bin", ck);
    cmd_detail::write_text(cfg.out_dir / "train_records.csv",
                           [&](std::ostream& os) { write_records_csv(os, res.records); });
    artifacts = {"checkpoint.bin", "train_records.csv"};
    log << "baseline accuracy " << fmt_num(acc_baseline) << '\n';
  }
  const auto rows =
      run_suite(net, assignment, acc_baseline, data, cfg.exp, cfg.suite, cfg.data.dataset, cmd_detail::progress(log));
  cmd_detail::write_text(cfg.out_dir / "suite_summary.csv", [&](std::ostream& os) { write_suite_csv(os, rows); });
  const auto stats = summarize_suite(rows);
  cmd_detail::write_text(cfg.out_dir / "suite_stats.csv", [&](std::ostream& os) { write_suite_stats_csv(os, stats); });
  artifacts.push_back("suite_summary.csv");
  artifacts.push_back("suite_stats.csv");
  std::filesystem::create_directories(cfg.out_dir / "timeseries");
  for (const auto& r : rows) {
    const std::string stem = "timeseries/p" + fmt_num(r.p_del) + "_seed" + std::to_string(r.seed);
    cmd_detail::write_text(cfg.out_dir / (stem + "_stdp.csv"),
                           [&](std::ostream& os) { write_timeseries_csv(os, r.stdp_series); });
    cmd_detail::write_text(cfg.out_dir / (stem + "_astdp.csv"),
                           [&](std::ostream& os) { write_timeseries_csv(os, r.astdp_series); });
    artifacts.push_back(stem + "_stdp.csv");
    artifacts.push_back(stem + "_astdp.csv");
  }
  write_manifest(cfg.out_dir, "suite", cfg, artifacts);
  for (const auto& s : stats)
    log << "p_del=" << fmt_num(s.p_del) << " post_fault=" << fmt_num(s.mean[0]) << " post_norm=" << fmt_num(s.mean[1])
        << " stdp=" << fmt_num(s.mean[2]) << " astdp=" << fmt_num(s.mean[3]) << '\n';
  return rows;
}

/// Runs the astrocyte micro-model on a built-in or user scenario.
inline astro::TraceLog cmd_astro_demo(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  astro::Scenario sc;
  std::string name = cfg.astro_scenario;
  if (name == "fig2" || name == "fig5") {
    sc.spec = name == "fig2" ? astro::fig2_scenario() : astro::fig5_scenario();
    sc.params = cfg.astro;
    sc.lif = cfg.micro_lif;
  } else {
    sc = astro::load_scenario(name, cfg.astro, cfg.micro_lif);
    name = "custom";
  }
  const double duration = sc.duration_s.value_or(cfg.astro_duration);
  const auto trace = astro::run_micro_experiment(sc.spec, sc.params, sc.lif, duration, sc.seed.value_or(cfg.exp.seed));
  const std::string file = "astro_" + name + ".csv";
  cmd_detail::write_text(cfg.out_dir / file, [&](std::ostream& os) { astro::write_trace_csv(os, trace); });
  write_manifest(cfg.out_dir, "astro-demo", cfg, {file});
  log << "astro-demo: " << trace.rows.size() << " one-second bins written to " << (cfg.out_dir / file).string()
      << '\n';
  return trace;
}

/// Writes the checkpoint's receptive fields as weights.pgm.
inline void cmd_dump_weights(const RunConfig& cfg, std::ostream& log) {
  cmd_detail::prepare(cfg);
  const auto ck = cmd_detail::require_checkpoint(cfg);
  write_bytes(cfg.out_dir / "weights.pgm", weights_to_pgm(ck.weights));
  write_manifest(cfg.out_dir, "dump-weights", cfg, {"weights.pgm"});
  log << "wrote " << (cfg.out_dir / "weights.pgm").string() << '\n';
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train", "fault", "repair", "eval", "suite", "astro-demo",
                                                 "dump-weights"};
  return names;
}

/// Dispatches by name.
inline void run_command(const std::string& name, const RunConfig& cfg, std::ostream& log) {
  if (name == "train")
    cmd_train(cfg, log);
  else if (name == "fault")
    cmd_fault(cfg, log);
  else if (name == "repair")
    cmd_repair(cfg, log);
  else if (name == "eval")
    cmd_eval(cfg, log);
  else if (name == "suite")
    cmd_suite(cfg, log);
  else if (name == "astro-demo")
    cmd_astro_demo(cfg, log);
  else if (name == "dump-weights")
    cmd_dump_weights(cfg, log);
  else
    throw ValidationError("unknown command '" + name + "'");
}

}  // namespace astrosnn
