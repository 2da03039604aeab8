#pragma once

// Run configuration: defaults, a sectioned key = value text format, and
// validation. The same text format is used for user config files, the
// config snapshot inside checkpoints, and run manifests.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "astrosnn/astrocyte.hpp"
#include "astrosnn/common.hpp"
#include "astrosnn/experiment.hpp"

namespace astrosnn {

struct RunConfig {
  ExperimentConfig exp;
  DataConfig data;
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  ///< input checkpoint for fault/repair/eval/dump-weights
  FaultSpec fault{0.8, 1};
  LearningRule repair_rule = LearningRule::kAStdp;
  bool reassign = false;  ///< eval: relabel neurons instead of using the stored labelling
  SuiteConfig suite;
  std::string astro_scenario = "fig2";  ///< fig2, fig5, or a scenario file path
  double astro_duration = 400.0;        ///< s
  astro::AstroParams astro;
  astro::MicroLifParams micro_lif;

  /// Propagates values that must agree across sub-configs.
  void finalize() { exp.encoder.dt = exp.net.lif.dt; }

  void validate() const {
    exp.validate();
    data.validate();
    fault.validate();
    if (suite.p_del.empty()) throw ValidationError("suite.p_del must list at least one value");
    for (double p : suite.p_del)
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("suite.p_del values must lie in [0, 1]");
    if (suite.n_seeds == 0) throw ValidationError("suite.n_seeds must be > 0");
    if (!(astro_duration >= 0.0)) throw ValidationError("astro.duration must be >= 0");
    astro.validate();
    micro_lif.validate();
  }
};

/// Reference hyperparameters, switched by dataset.
inline void apply_dataset_defaults(RunConfig& c, const std::string& dataset) {
  c.data.dataset = dataset;
  auto& pp = c.exp.net.plasticity;
  if (dataset == "fmnist") {
    pp.eta_post = 4e-3;
    pp.eta_pre = 4e-5;
    c.exp.net.inhibition.w_recurrent = -250.0;
    c.data.sobel = true;
    c.exp.net.n_neurons = 400;
  } else if (dataset == "mnist") {
    pp.eta_post = 1e-2;
    pp.eta_pre = 1e-4;
    c.exp.net.inhibition.w_recurrent = -120.0;
    c.data.sobel = false;
    c.exp.net.n_neurons = 225;
  } else {
    throw ValidationError("run.dataset must be 'mnist' or 'fmnist', got '" + dataset + "'");
  }
}

inline RunConfig default_config(const std::string& dataset = "mnist") {
  RunConfig c;
  apply_dataset_defaults(c, dataset);
  c.finalize();
  return c;
}

namespace config_detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, const std::string& name) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != e)
    throw ValidationError("config key '" + name + "': expected a number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& name) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ValidationError("config key '" + name + "': expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& name) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValidationError("config key '" + name + "': expected true or false, got '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& s, const std::string& name) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(parse_double(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1), name));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

/// One configurable field: where it lives in the text format and how to
/// read and write it.
struct ConfigField {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string name() const { return section + "." + key; }
};

namespace config_detail {

template <typename Acc>
ConfigField real(const char* sec, const char* key, Acc acc) {
  const std::string name = std::string(sec) + "." + key;
  return {sec, key, [acc](const RunConfig& c) { return format_double(acc(const_cast<RunConfig&>(c))); },
          [acc, name](RunConfig& c, const std::string& v) { acc(c) = parse_double(v, name); }};
}

template <typename Acc>
ConfigField count(const char* sec, const char* key, Acc acc) {
  const std::string name = std::string(sec) + "." + key;
  return {sec, key, [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = static_cast<std::remove_reference_t<decltype(acc(c))>>(parse_uint(v, name));
          }};
}

template <typename Acc>
ConfigField flag(const char* sec, const char* key, Acc acc) {
  const std::string name = std::string(sec) + "." + key;
  return {sec, key, [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [acc, name](RunConfig& c, const std::string& v) { acc(c) = parse_bool(v, name); }};
}

template <typename Acc>
ConfigField text(const char* sec, const char* key, Acc acc) {
  return {sec, key, [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c))); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

}  // namespace config_detail

#define ASNN_REF(T, expr) [](RunConfig & c) -> T& { return c.expr; }

/// Every field, in serialization order.
inline const std::vector<ConfigField>& config_fields() {
  using namespace config_detail;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    // [run]
    f.push_back({"run", "dataset", [](const RunConfig& c) { return c.data.dataset; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "mnist" && v != "fmnist")
                     throw ValidationError("config key 'run.dataset': expected mnist or fmnist, got '" + v + "'");
                   c.data.dataset = v;
                 }});
    f.push_back({"run", "data_dir", [](const RunConfig& c) { return c.data.data_dir.string(); },
                 [](RunConfig& c, const std::string& v) { c.data.data_dir = v; }});
    f.push_back({"run", "out_dir", [](const RunConfig& c) { return c.out_dir.string(); },
                 [](RunConfig& c, const std::string& v) { c.out_dir = v; }});
    f.push_back({"run", "checkpoint", [](const RunConfig& c) { return c.checkpoint.string(); },
                 [](RunConfig& c, const std::string& v) { c.checkpoint = v; }});
    f.push_back(count("run", "seed", ASNN_REF(std::uint64_t, exp.seed)));
    f.push_back(count("run", "n_neurons", ASNN_REF(std::size_t, exp.net.n_neurons)));
    f.push_back(count("run", "train_samples", ASNN_REF(std::size_t, data.train_samples)));
    f.push_back(count("run", "test_samples", ASNN_REF(std::size_t, data.test_samples)));
    f.push_back(flag("run", "sobel", ASNN_REF(bool, data.sobel)));
    // [lif]
    f.push_back(real("lif", "tau_mem", ASNN_REF(double, exp.net.lif.tau_mem)));
    f.push_back(real("lif", "v_rest", ASNN_REF(double, exp.net.lif.v_rest)));
    f.push_back(real("lif", "v_reset", ASNN_REF(double, exp.net.lif.v_reset)));
    f.push_back(real("lif", "theta_0", ASNN_REF(double, exp.net.lif.theta_0)));
    f.push_back(real("lif", "theta_plus", ASNN_REF(double, exp.net.lif.theta_plus)));
    f.push_back(real("lif", "tau_theta", ASNN_REF(double, exp.net.lif.tau_theta)));
    f.push_back(real("lif", "delta_ref", ASNN_REF(double, exp.net.lif.delta_ref)));
    f.push_back(real("lif", "dt", ASNN_REF(double, exp.net.lif.dt)));
    // [network]
    f.push_back(real("network", "w_recurrent", ASNN_REF(double, exp.net.inhibition.w_recurrent)));
    f.push_back(flag("network", "inhibition", ASNN_REF(bool, exp.net.inhibition.enabled)));
    f.push_back(real("network", "synaptic_gain", ASNN_REF(double, exp.net.synaptic_gain)));
    f.push_back(real("network", "w_max", ASNN_REF(double, exp.net.w_max)));
    f.push_back(real("network", "init_w_max", ASNN_REF(double, exp.net.init_w_max)));
    f.push_back(real("network", "tau_trace", ASNN_REF(double, exp.net.tau_trace)));
    // [plasticity]
    f.push_back(real("plasticity", "eta_pre", ASNN_REF(double, exp.net.plasticity.eta_pre)));
    f.push_back(real("plasticity", "eta_post", ASNN_REF(double, exp.net.plasticity.eta_post)));
    f.push_back(real("plasticity", "alpha", ASNN_REF(double, exp.net.plasticity.alpha)));
    f.push_back(real("plasticity", "sigma", ASNN_REF(double, exp.net.plasticity.sigma)));
    f.push_back(real("plasticity", "w_norm", ASNN_REF(double, exp.net.plasticity.w_norm)));
    f.push_back(flag("plasticity", "w_alpha_healthy_only", ASNN_REF(bool, exp.net.plasticity.w_alpha_healthy_only)));
    // [encoder]
    f.push_back(real("encoder", "max_rate", ASNN_REF(double, exp.encoder.max_rate)));
    f.push_back(real("encoder", "duration", ASNN_REF(double, exp.encoder.duration)));
    f.push_back(real("encoder", "retry_rate_step", ASNN_REF(double, exp.inference.retry_rate_step)));
    f.push_back(count("encoder", "max_retries", ASNN_REF(std::size_t, exp.inference.max_retries)));
    // [train]
    f.push_back(count("train", "epochs", ASNN_REF(std::size_t, exp.train.epochs)));
    f.push_back(count("train", "eval_every", ASNN_REF(std::size_t, exp.train.eval_every)));
    f.push_back(count("train", "assign_samples", ASNN_REF(std::size_t, exp.train.assign_samples)));
    f.push_back(flag("train", "normalize_each_sample", ASNN_REF(bool, exp.train.normalize_each_sample)));
    f.push_back({"train", "rule", [](const RunConfig& c) { return to_string(c.exp.train.rule); },
                 [](RunConfig& c, const std::string& v) { c.exp.train.rule = parse_rule(v); }});
    // [fault]
    f.push_back(real("fault", "p_del", ASNN_REF(double, fault.p_del)));
    f.push_back(count("fault", "seed", ASNN_REF(std::uint64_t, fault.seed)));
    // [repair]
    f.push_back({"repair", "rule", [](const RunConfig& c) { return to_string(c.repair_rule); },
                 [](RunConfig& c, const std::string& v) { c.repair_rule = parse_rule(v); }});
    f.push_back(count("repair", "astdp_epochs", ASNN_REF(std::size_t, exp.repair.astdp_epochs)));
    f.push_back(count("repair", "stdp_epochs", ASNN_REF(std::size_t, exp.repair.stdp_epochs)));
    f.push_back(count("repair", "eval_every", ASNN_REF(std::size_t, exp.repair.eval_every)));
    f.push_back(count("repair", "patience", ASNN_REF(std::size_t, exp.repair.patience)));
    f.push_back(count("repair", "w_alpha_every", ASNN_REF(std::size_t, exp.repair.w_alpha_every)));
    f.push_back(flag("repair", "normalize_each_sample", ASNN_REF(bool, exp.repair.normalize_each_sample)));
    // [eval]
    f.push_back(flag("eval", "reassign", ASNN_REF(bool, reassign)));
    // [suite]
    f.push_back({"suite", "p_del",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.suite.p_del.size(); ++i)
                     s += (i ? "," : "") + format_double(c.suite.p_del[i]);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) { c.suite.p_del = parse_list(v, "suite.p_del"); }});
    f.push_back(count("suite", "n_seeds", ASNN_REF(std::size_t, suite.n_seeds)));
    f.push_back(count("suite", "jobs", ASNN_REF(std::size_t, suite.jobs)));
    // [astro]
    f.push_back(text("astro", "scenario", ASNN_REF(std::string, astro_scenario)));
    f.push_back(real("astro", "duration", ASNN_REF(double, astro_duration)));
    f.push_back(real("astro", "dt", ASNN_REF(double, astro.dt)));
    f.push_back(real("astro", "tau_ag", ASNN_REF(double, astro.tau_ag)));
    f.push_back(real("astro", "r_ag", ASNN_REF(double, astro.r_ag)));
    f.push_back(real("astro", "tau_glu", ASNN_REF(double, astro.tau_glu)));
    f.push_back(real("astro", "r_glu", ASNN_REF(double, astro.r_glu)));
    f.push_back(real("astro", "tau_esp", ASNN_REF(double, astro.tau_esp)));
    f.push_back(real("astro", "m_esp", ASNN_REF(double, astro.m_esp)));
    f.push_back(real("astro", "k_ag", ASNN_REF(double, astro.k_ag)));
    f.push_back(real("astro", "ca_threshold", ASNN_REF(double, astro.ca_threshold)));
    f.push_back(real("astro", "ip3_base", ASNN_REF(double, astro.li_rinzel.ip3_base)));
    f.push_back(real("astro", "tau_ip3", ASNN_REF(double, astro.li_rinzel.tau_ip3)));
    f.push_back(real("astro", "r_ip3", ASNN_REF(double, astro.li_rinzel.r_ip3)));
    f.push_back(real("astro", "w_syn", ASNN_REF(double, micro_lif.w_syn)));
    return f;
  }();
  return fields;
}

#undef ASNN_REF

/// A key = value entry as read from text, with its origin for messages.
struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  std::string origin;
};

/// Sections that may appear in config text but carry no run parameters.
inline bool is_passive_section(const std::string& s) { return s == "manifest" || s == "artifacts"; }

inline std::vector<ConfigEntry> parse_config_text(std::istream& in, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": unterminated section header");
      section = config_detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
    const auto key = config_detail::trim(line.substr(0, eq));
    const auto value = config_detail::trim(line.substr(eq + 1));
    if (is_passive_section(section)) continue;
    if (section.empty()) throw ValidationError(where + ": key '" + key + "' appears before any [section]");
    out.push_back({section, key, value, where});
  }
  return out;
}

inline std::vector<ConfigEntry> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  return parse_config_text(in, path.string());
}

/// Parses a "section.key=value" override.
inline ConfigEntry parse_override(const std::string& s) {
  const auto eq = s.find('=');
  const auto dot = s.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ValidationError("override '" + s + "' must look like section.key=value");
  return {config_detail::trim(s.substr(0, dot)), config_detail::trim(s.substr(dot + 1, eq - dot - 1)),
          config_detail::trim(s.substr(eq + 1)), "override"};
}

inline void apply_entries(RunConfig& c, const std::vector<ConfigEntry>& entries) {
  const auto& fields = config_fields();
  for (const auto& e : entries) {
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const ConfigField& f) { return f.section == e.section && f.key == e.key; });
    if (it == fields.end())
      throw ValidationError(e.origin + ": unknown config key '" + e.section + "." + e.key + "'");
    it->set(c, e.value);
  }
  c.finalize();
}

/// Dataset defaults first (the dataset named last wins), then entries in
/// order.
inline RunConfig build_config(const std::vector<ConfigEntry>& entries) {
  std::string dataset = "mnist";
  for (const auto& e : entries)
    if (e.section == "run" && e.key == "dataset") dataset = e.value;
  RunConfig c = default_config(dataset);
  apply_entries(c, entries);
  return c;
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  std::string section;
  for (const auto& f : config_fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(c) << '\n';
  }
}

inline std::string config_to_string(const RunConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

inline RunConfig config_from_string(const std::string& text, const std::string& source = "<config>") {
  std::istringstream is(text);
  return build_config(parse_config_text(is, source));
}

}  // namespace astrosnn
