#pragma once

#include <zlib.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "astrosnn/common.hpp"

namespace astrosnn {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumClasses = 10;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// One 28x28 grayscale image (row-major) with its class label.
struct ImageSample {
  std::array<std::uint8_t, kImagePixels> pixels{};
  std::uint8_t label = 0;

  std::uint8_t at(std::size_t row, std::size_t col) const noexcept { return pixels[row * kImageSide + col]; }
};

/// Reads a whole file, inflating it if it is gzip-compressed.
inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw ParseError("cannot open '" + path.string() + "'", 0);
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw ParseError("read error in '" + path.string() + "': " + msg, out.size());
    }
    if (n == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return out;
}

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size())
    throw ParseError(what + ": truncated header at byte offset " + std::to_string(offset), offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xF];
  return s;
}

}  // namespace detail

/// Parses an IDX3 image container (magic 0x00000803, 28x28 images).
inline std::vector<std::array<std::uint8_t, kImagePixels>> parse_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0, "idx images");
  if (magic != kIdxImageMagic)
    throw ParseError("idx images: bad magic " + detail::hex32(magic) + " at byte offset 0, expected " +
                         detail::hex32(kIdxImageMagic),
                     0);
  const auto count = detail::read_be32(bytes, 4, "idx images");
  const auto rows = detail::read_be32(bytes, 8, "idx images");
  const auto cols = detail::read_be32(bytes, 12, "idx images");
  if (rows != kImageSide || cols != kImageSide)
    throw ParseError("idx images: expected 28x28 images, header says " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " at byte offset 8",
                     8);
  const std::size_t need = 16 + std::size_t{count} * kImagePixels;
  if (bytes.size() < need)
    throw ParseError("idx images: truncated pixel data, file has " + std::to_string(bytes.size()) +
                         " bytes but header requires " + std::to_string(need),
                     bytes.size());
  if (bytes.size() > need)
    throw ParseError("idx images: " + std::to_string(bytes.size() - need) + " trailing bytes at byte offset " +
                         std::to_string(need),
                     need);
  std::vector<std::array<std::uint8_t, kImagePixels>> images(count);
  for (std::size_t n = 0; n < count; ++n)
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(16 + n * kImagePixels), kImagePixels, images[n].begin());
  return images;
}

/// Parses an IDX1 label container (magic 0x00000801).
inline std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0, "idx labels");
  if (magic != kIdxLabelMagic)
    throw ParseError("idx labels: bad magic " + detail::hex32(magic) + " at byte offset 0, expected " +
                         detail::hex32(kIdxLabelMagic),
                     0);
  const auto count = detail::read_be32(bytes, 4, "idx labels");
  const std::size_t need = 8 + std::size_t{count};
  if (bytes.size() != need)
    throw ParseError("idx labels: file has " + std::to_string(bytes.size()) + " bytes but header requires " +
                         std::to_string(need),
                     std::min(bytes.size(), need));
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t n = 0; n < labels.size(); ++n)
    if (labels[n] >= kNumClasses)
      throw ParseError("idx labels: label " + std::to_string(labels[n]) + " out of range at byte offset " +
                           std::to_string(8 + n),
                       8 + n);
  return labels;
}

/// Loads an image/label file pair (plain or gzip-compressed).
inline std::vector<ImageSample> load_idx(const std::filesystem::path& images_path,
                                         const std::filesystem::path& labels_path) {
  const auto images = parse_idx_images(read_file_bytes(images_path));
  const auto labels = parse_idx_labels(read_file_bytes(labels_path));
  if (images.size() != labels.size())
    throw ParseError("idx: image count " + std::to_string(images.size()) + " does not match label count " +
                         std::to_string(labels.size()) + " (header byte offset 4)",
                     4);
  std::vector<ImageSample> out(images.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n].pixels = images[n];
    out[n].label = labels[n];
  }
  return out;
}

inline std::vector<std::uint8_t> serialize_idx_images(std::span<const ImageSample> samples) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + samples.size() * kImagePixels);
  detail::append_be32(out, kIdxImageMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(samples.size()));
  detail::append_be32(out, kImageSide);
  detail::append_be32(out, kImageSide);
  for (const auto& s : samples) out.insert(out.end(), s.pixels.begin(), s.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> serialize_idx_labels(std::span<const ImageSample> samples) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + samples.size());
  detail::append_be32(out, kIdxLabelMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("cannot write '" + path.string() + "'", 0);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Writes uncompressed IDX files.
inline void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                      std::span<const ImageSample> samples) {
  write_bytes(images_path, serialize_idx_images(samples));
  write_bytes(labels_path, serialize_idx_labels(samples));
}

/// Locates a split inside a dataset directory. Accepts the canonical names
/// with either '-' or '.' before "idx" and an optional ".gz" suffix.
inline std::pair<std::filesystem::path, std::filesystem::path> find_split(const std::filesystem::path& dir,
                                                                          bool train) {
  const std::string prefix = train ? "train" : "t10k";
  auto pick = [&](const std::string& kind) {
    for (const char* sep : {"-", "."}) {
      for (const char* ext : {"", ".gz"}) {
        auto p = dir / (prefix + "-" + kind + sep + (kind == "images" ? "idx3-ubyte" : "idx1-ubyte") + ext);
        if (std::filesystem::exists(p)) return p;
      }
    }
    throw ParseError("no " + prefix + " " + kind + " file found in '" + dir.string() + "'", 0);
  };
  return {pick("images"), pick("labels")};
}

}  // namespace astrosnn
