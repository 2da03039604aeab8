// Command-line front end. Each subcommand resolves a RunConfig from
// (checkpoint config) < --config file < flags, in that order, and hands it
// to the matching library command.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "astrosnn/commands.hpp"

namespace {

using astrosnn::ConfigEntry;

struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, data_dir, dataset, checkpoint;
  std::optional<double> p_del;
  std::optional<std::uint64_t> fault_seed;
  std::optional<std::string> rule;
  std::optional<std::size_t> epochs;
  std::optional<std::string> scenario;
  std::optional<double> duration;
  std::optional<std::size_t> jobs, n_seeds;
  std::optional<std::string> p_del_list;
  bool reassign = false;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_file, "config file (sectioned key = value)");
  app->add_option("--seed", o.seed, "base random seed");
  app->add_option("--out-dir", o.out_dir, "output directory");
  app->add_option("--data-dir", o.data_dir, "directory holding the IDX files");
  app->add_option("--dataset", o.dataset, "mnist or fmnist")->check(CLI::IsMember({"mnist", "fmnist"}));
  app->add_option("--set", o.sets, "override any field: section.key=value (repeatable)");
}

std::vector<ConfigEntry> flag_entries(const std::string& command, const Options& o) {
  std::vector<ConfigEntry> e;
  auto put = [&](const char* sec, const char* key, const std::string& v) { e.push_back({sec, key, v, "--flag"}); };
  if (o.dataset) put("run", "dataset", *o.dataset);
  if (o.seed) put("run", "seed", std::to_string(*o.seed));
  if (o.out_dir) put("run", "out_dir", *o.out_dir);
  if (o.data_dir) put("run", "data_dir", *o.data_dir);
  if (o.checkpoint) put("run", "checkpoint", std::filesystem::absolute(*o.checkpoint).string());
  if (o.p_del) put("fault", "p_del", astrosnn::fmt_num(*o.p_del));
  if (o.fault_seed) put("fault", "seed", std::to_string(*o.fault_seed));
  if (o.rule) put("repair", "rule", *o.rule);
  if (o.epochs) {
    const bool stdp = o.rule && astrosnn::parse_rule(*o.rule) == astrosnn::LearningRule::kStdp;
    put("repair", stdp ? "stdp_epochs" : "astdp_epochs", std::to_string(*o.epochs));
  }
  if (o.scenario) {
    const bool builtin = *o.scenario == "fig2" || *o.scenario == "fig5";
    put("astro", "scenario", builtin ? *o.scenario : std::filesystem::absolute(*o.scenario).string());
  }
  if (o.duration) put("astro", "duration", astrosnn::fmt_num(*o.duration));
  if (o.jobs) put("suite", "jobs", std::to_string(*o.jobs));
  if (o.n_seeds) put("suite", "n_seeds", std::to_string(*o.n_seeds));
  if (o.p_del_list) put("suite", "p_del", *o.p_del_list);
  if (o.reassign && command == "eval") put("eval", "reassign", "true");
  for (const auto& s : o.sets) e.push_back(astrosnn::parse_override(s));
  return e;
}

astrosnn::RunConfig resolve(const std::string& command, const Options& o) {
  std::vector<ConfigEntry> entries;
  if (!o.config_file.empty()) entries = astrosnn::read_config_file(o.config_file);
  const auto flags = flag_entries(command, o);
  entries.insert(entries.end(), flags.begin(), flags.end());
  const bool from_checkpoint = command == "fault" || command == "repair" || command == "eval" ||
                               command == "dump-weights";
  std::string ckpt;
  for (const auto& e : entries)
    if (e.section == "run" && e.key == "checkpoint") ckpt = e.value;
  if (from_checkpoint && !ckpt.empty()) {
    auto cfg = astrosnn::load_checkpoint(ckpt).config;
    astrosnn::apply_entries(cfg, entries);
    return cfg;
  }
  return astrosnn::build_config(entries);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking network self-repair experiments with an astrocyte-guided plasticity rule"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a baseline network with STDP");
  add_common(train, o);

  auto* fault = app.add_subcommand("fault", "inject stuck-at-zero faults into a checkpoint");
  add_common(fault, o);
  fault->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  fault->add_option("--p-del", o.p_del, "fault probability per synapse");
  fault->add_option("--fault-seed", o.fault_seed, "seed of the fault mask");

  auto* rep = app.add_subcommand("repair", "retrain a faulted checkpoint");
  add_common(rep, o);
  rep->add_option("--checkpoint", o.checkpoint, "faulted checkpoint")->check(CLI::ExistingFile);
  rep->add_option("--rule", o.rule, "stdp or astdp");
  rep->add_option("--epochs", o.epochs, "retraining epochs for the chosen rule");

  auto* eval = app.add_subcommand("eval", "test accuracy of a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint")->check(CLI::ExistingFile);
  eval->add_flag("--reassign", o.reassign, "relabel neurons before evaluating");

  auto* suite = app.add_subcommand("suite", "baseline plus fault/repair sweep over p_del and seeds");
  add_common(suite, o);
  suite->add_option("--checkpoint", o.checkpoint, "reuse a trained baseline")->check(CLI::ExistingFile);
  suite->add_option("--p-del", o.p_del_list, "comma-separated fault probabilities");
  suite->add_option("--seeds", o.n_seeds, "seeds per p_del");
  suite->add_option("--jobs", o.jobs, "worker threads");

  auto* astro_demo = app.add_subcommand("astro-demo", "run the astrocyte micro-model");
  add_common(astro_demo, o);
  astro_demo->add_option("--scenario", o.scenario, "fig2, fig5 or a scenario file");
  astro_demo->add_option("--duration", o.duration, "simulated seconds");

  auto* dump = app.add_subcommand("dump-weights", "write receptive fields as a PGM image");
  add_common(dump, o);
  dump->add_option("--checkpoint", o.checkpoint, "checkpoint")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(astrosnn::ExitCode::kValidation);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(command, o);
    astrosnn::run_command(command, cfg, std::cerr);
  } catch (const astrosnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(astrosnn::ExitCode::kDataParse);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
