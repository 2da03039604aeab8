#pragma once

// Output artifacts: CSV tables, PGM weight maps, and run manifests with
// SHA-256 artifact hashes.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/config.hpp"
#include "astrosnn/experiment.hpp"
#include "astrosnn/synapses.hpp"

namespace astrosnn {

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  return config_detail::format_double(v);
}

inline std::ofstream open_output(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw ValidationError("cannot write '" + path.string() + "'");
  return os;
}

inline void write_records_csv(std::ostream& os, std::span<const ExperimentRecord> records) {
  os << "phase,samples_seen,test_accuracy,w_alpha,seed\n";
  for (const auto& r : records)
    os << r.phase << ',' << r.samples_seen << ',' << fmt_num(r.test_accuracy) << ',' << fmt_num(r.w_alpha) << ','
       << r.seed << '\n';
}

/// Learning curve of one run: (samples_seen, test_accuracy, w_alpha).
inline void write_timeseries_csv(std::ostream& os, std::span<const ExperimentRecord> records) {
  os << "samples_seen,test_accuracy,w_alpha\n";
  for (const auto& r : records)
    os << r.samples_seen << ',' << fmt_num(r.test_accuracy) << ',' << fmt_num(r.w_alpha) << '\n';
}

inline void write_suite_csv(std::ostream& os, std::span<const SuiteRow> rows) {
  os << "dataset,n_neurons,p_del,seed,acc_baseline,acc_post_fault,acc_post_norm,acc_stdp_retrain,acc_astdp_retrain\n";
  for (const auto& r : rows)
    os << r.dataset << ',' << r.n_neurons << ',' << fmt_num(r.p_del) << ',' << r.seed << ','
       << fmt_num(r.acc_baseline) << ',' << fmt_num(r.acc_post_fault) << ',' << fmt_num(r.acc_post_norm) << ','
       << fmt_num(r.acc_stdp_retrain) << ',' << fmt_num(r.acc_astdp_retrain) << '\n';
}

struct SuiteStats {
  double p_del = 0.0;
  std::size_t n = 0;
  double mean[4] = {};  ///< post_fault, post_norm, stdp, astdp
  double sd[4] = {};
  /// A-STDP accuracy gained over the renormalized, untrained network.
  double gain() const { return mean[3] - mean[1]; }
};

/// Mean and sample standard deviation per p_del, in first-seen order.
inline std::vector<SuiteStats> summarize_suite(std::span<const SuiteRow> rows) {
  std::vector<SuiteStats> out;
  for (const auto& r : rows)
    if (std::none_of(out.begin(), out.end(), [&](const SuiteStats& s) { return s.p_del == r.p_del; }))
      out.push_back({r.p_del});
  for (auto& s : out) {
    std::vector<std::array<double, 4>> v;
    for (const auto& r : rows)
      if (r.p_del == s.p_del) v.push_back({r.acc_post_fault, r.acc_post_norm, r.acc_stdp_retrain, r.acc_astdp_retrain});
    s.n = v.size();
    for (int k = 0; k < 4; ++k) {
      double m = 0.0;
      for (const auto& x : v) m += x[k];
      m /= static_cast<double>(v.size());
      double ss = 0.0;
      for (const auto& x : v) ss += (x[k] - m) * (x[k] - m);
      s.mean[k] = m;
      s.sd[k] = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
  }
  return out;
}

inline void write_suite_stats_csv(std::ostream& os, std::span<const SuiteStats> stats) {
  os << "p_del,n_seeds,mean_post_fault,sd_post_fault,mean_post_norm,sd_post_norm,mean_stdp_retrain,sd_stdp_retrain,"
        "mean_astdp_retrain,sd_astdp_retrain,astdp_gain\n";
  for (const auto& s : stats) {
    os << fmt_num(s.p_del) << ',' << s.n;
    for (int k = 0; k < 4; ++k) os << ',' << fmt_num(s.mean[k]) << ',' << fmt_num(s.sd[k]);
    os << ',' << fmt_num(s.gain()) << '\n';
  }
}

/// Tiles each neuron's incoming weights as a 28x28 patch on a square grid
/// (side = ceil(sqrt(n))) and writes a binary PGM scaled so the largest
/// weight maps to 255.
inline std::vector<std::uint8_t> weights_to_pgm(const SynapseMatrix& w) {
  require(w.n_inputs() == kImagePixels, "weights_to_pgm: expected 784 inputs");
  const std::size_t n = w.n_neurons();
  std::size_t side = 1;
  while (side * side < n) ++side;
  const std::size_t px = side * kImageSide;
  double peak = 0.0;
  for (double x : w.data()) peak = std::max(peak, x);
  std::vector<std::uint8_t> img(px * px, 0);
  if (peak > 0.0) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t r0 = (j / side) * kImageSide;
      const std::size_t c0 = (j % side) * kImageSide;
      for (std::size_t i = 0; i < kImagePixels; ++i) {
        const double v = std::clamp(w(i, j) / peak, 0.0, 1.0) * 255.0;
        img[(r0 + i / kImageSide) * px + c0 + i % kImageSide] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  const std::string header = "P5\n" + std::to_string(px) + " " + std::to_string(px) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.begin(), img.end());
  return out;
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 0xF];
  }
  return s;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

/// Writes `<out_dir>/manifest.ini`: the command, the full resolved config,
/// and the SHA-256 of every artifact (paths relative to out_dir). The file
/// is itself a valid config, so `astrosnn <command> --config manifest.ini`
/// repeats the run.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& artifacts) {
  auto os = open_output(out_dir / "manifest.ini");
  os << "# re-run with: astrosnn " << command << " --config manifest.ini --out-dir <dir>\n";
  os << "[manifest]\ncommand = " << command << "\n\n";
  write_config(os, cfg);
  os << "\n[artifacts]\n";
  for (const auto& a : artifacts) os << a << " = " << sha256_file(out_dir / a) << '\n';
}

/// Reads the [manifest] command and [artifacts] entries back.
struct ManifestInfo {
  std::string command;
  std::vector<std::pair<std::string, std::string>> artifacts;
};

inline ManifestInfo read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest '" + path.string() + "'", 0);
  ManifestInfo info;
  std::string line, section;
  while (std::getline(in, line)) {
    line = config_detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto k = config_detail::trim(line.substr(0, eq));
    const auto v = config_detail::trim(line.substr(eq + 1));
    if (section == "manifest" && k == "command") info.command = v;
    if (section == "artifacts") info.artifacts.emplace_back(k, v);
  }
  return info;
}

}  // namespace astrosnn
