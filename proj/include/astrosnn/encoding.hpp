#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "astrosnn/common.hpp"
#include "astrosnn/idx.hpp"

namespace astrosnn {

/// Gradient magnitude under the 3x3 Sobel kernels with zero padding,
/// rescaled so the per-image maximum maps to 255 (all-zero stays all-zero).
inline ImageSample sobel_filter(const ImageSample& image) {
  constexpr int n = static_cast<int>(kImageSide);
  auto px = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= n || c >= n) return 0.0;
    return image.pixels[static_cast<std::size_t>(r * n + c)];
  };
  std::array<double, kImagePixels> mag{};
  double peak = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double gx = (px(r - 1, c + 1) + 2.0 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2.0 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r - 1, c) + px(r - 1, c + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag[static_cast<std::size_t>(r * n + c)] = m;
      peak = std::max(peak, m);
    }
  }
  ImageSample out;
  out.label = image.label;
  if (peak > 0.0) {
    for (std::size_t k = 0; k < kImagePixels; ++k)
      out.pixels[k] = static_cast<std::uint8_t>(std::lround(std::clamp(mag[k] / peak * 255.0, 0.0, 255.0)));
  }
  return out;
}

/// Rate-coding parameters. Rates in Hz, times in ms.
struct EncoderConfig {
  double max_rate = 128.0;
  double duration = 250.0;
  double dt = 1.0;

  double intensity_scale() const noexcept { return max_rate / 255.0; }
  std::size_t steps() const noexcept { return static_cast<std::size_t>(std::llround(duration / dt)); }

  void validate() const {
    if (!(max_rate > 0.0)) throw ValidationError("encoder.max_rate must be > 0");
    if (!(dt > 0.0)) throw ValidationError("encoder.dt must be > 0");
    const double ratio = duration / dt;
    if (!(duration > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9)
      throw ValidationError("encoder.duration must be a positive multiple of encoder.dt");
    if (max_rate * dt / 1000.0 > 1.0)
      throw ValidationError("encoder: max_rate * dt exceeds 1 spike per step (Bernoulli approximation invalid)");
  }
};

/// Dense spike raster, one row of n_inputs flags per timestep.
class SpikeRaster {
 public:
  SpikeRaster() = default;
  SpikeRaster(std::size_t steps, std::size_t n_inputs)
      : steps_(steps), n_inputs_(n_inputs), bits_(steps * n_inputs, 0) {}

  std::size_t steps() const noexcept { return steps_; }
  std::size_t n_inputs() const noexcept { return n_inputs_; }
  std::span<const std::uint8_t> row(std::size_t t) const noexcept { return {bits_.data() + t * n_inputs_, n_inputs_}; }
  std::span<std::uint8_t> row(std::size_t t) noexcept { return {bits_.data() + t * n_inputs_, n_inputs_}; }
  std::size_t count(std::size_t input) const noexcept {
    std::size_t c = 0;
    for (std::size_t t = 0; t < steps_; ++t) c += bits_[t * n_inputs_ + input];
    return c;
  }
  std::size_t total() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  friend bool operator==(const SpikeRaster&, const SpikeRaster&) = default;

 private:
  std::size_t steps_ = 0;
  std::size_t n_inputs_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Bernoulli-per-step approximation of a Poisson train per pixel: pixel p
/// fires in each step with probability (p/255) * max_rate * dt. Draws are
/// taken step-major over the nonzero pixels, so the raster is a pure
/// function of the image, the config and the generator state.
inline SpikeRaster poisson_encode(const ImageSample& image, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t steps = cfg.steps();
  SpikeRaster raster(steps, kImagePixels);
  std::vector<std::uint32_t> active;
  std::vector<double> prob;
  const double dt_s = cfg.dt / 1000.0;
  for (std::size_t k = 0; k < kImagePixels; ++k) {
    if (image.pixels[k] == 0) continue;
    active.push_back(static_cast<std::uint32_t>(k));
    prob.push_back(image.pixels[k] * cfg.intensity_scale() * dt_s);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    auto row = raster.row(t);
    for (std::size_t a = 0; a < active.size(); ++a)
      if (uniform01(rng) < prob[a]) row[active[a]] = 1;
  }
  return raster;
}

}  // namespace astrosnn
