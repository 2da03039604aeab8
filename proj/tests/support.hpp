#pragma once

// Shared fixtures: synthetic digit-like datasets and scratch directories.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "astrosnn/astrosnn.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// A fresh, empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("astrosnn_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Ten well-separated class templates: class c lights a 6x6 block at a
/// class-specific position, with per-sample jitter and background noise.
inline std::vector<astrosnn::ImageSample> synthetic_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_int_distribution<int> noise(0, 30);
  std::vector<astrosnn::ImageSample> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto& img = out[s];
    img.label = static_cast<std::uint8_t>(s % astrosnn::kNumClasses);
    img.pixels.fill(0);
    for (auto& p : img.pixels)
      if (noise(rng) > 27) p = static_cast<std::uint8_t>(noise(rng));
    const int r0 = 3 + 8 * (img.label / 4) + jitter(rng);
    const int c0 = 2 + 6 * (img.label % 4) + jitter(rng);
    for (int r = r0; r < r0 + 6; ++r)
      for (int c = c0; c < c0 + 6; ++c)
        if (r >= 0 && r < 28 && c >= 0 && c < 28) img.pixels[r * 28 + c] = 255;
  }
  return out;
}

/// Writes train/t10k IDX pairs with the canonical file names.
inline void write_synthetic_dataset(const fs::path& dir, std::size_t n_train, std::size_t n_test) {
  fs::create_directories(dir);
  const auto train = synthetic_samples(n_train, 11);
  const auto test = synthetic_samples(n_test, 12);
  astrosnn::write_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", train);
  astrosnn::write_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", test);
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Runs a shell command and returns its exit status (-1 if it did not exit).
inline int run(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  if (st == -1 || !WIFEXITED(st)) return -1;
  return WEXITSTATUS(st);
}

inline bool mnist_available(const fs::path& dir) {
  try {
    astrosnn::find_split(dir, true);
    astrosnn::find_split(dir, false);
    return true;
  } catch (const astrosnn::Error&) {
    return false;
  }
}

}  // namespace testsupport
