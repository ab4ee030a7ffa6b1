#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rvae/numerics.hpp"

namespace rvae {

enum class Provenance : std::uint8_t { original, noise };

/// N images flattened to rows of `image_rows * image_cols` intensities in [0, 1].
struct ImageDataset {
  Matrix pixels;
  std::vector<Provenance> provenance;
  std::size_t image_rows = 28;
  std::size_t image_cols = 28;

  std::size_t count() const noexcept { return pixels.rows(); }
  std::size_t dim() const noexcept { return pixels.cols(); }
  std::size_t count_of(Provenance p) const;
};

/// original:noise proportion, e.g. 2:1.
struct NoiseMixSpec {
  std::uint32_t ratio_original = 1;
  std::uint32_t ratio_noise = 1;

  /// Parses "R:S" with both sides positive integers.
  static NoiseMixSpec parse(const std::string& text);
  std::string to_string() const;
};

/// Seed used to binarize test sets once, so evaluations are comparable across runs.
inline constexpr std::uint64_t kEvalBinarizationSeed = 20170301;

/// Reads an IDX3 unsigned-byte image file (magic 0x00000803, big-endian).
ImageDataset load_idx(const std::filesystem::path& images_path);

/// Writes an IDX3 file; intensities are stored as round(255·p).
void write_idx(const ImageDataset& data, const std::filesystem::path& images_path);

/// Sidecar CSV `index,provenance`.
void write_provenance_csv(const ImageDataset& data, const std::filesystem::path& path);

/// The first `n` examples (all of them when n >= count).
ImageDataset take_first(const ImageDataset& data, std::size_t n);

/// Concatenation, preserving provenance.
ImageDataset concat(const ImageDataset& a, const ImageDataset& b);

/// Grand mean over all pixels.
double mean_intensity(const ImageDataset& data);

/// `count` constant images at intensity m, flagged as noise.
ImageDataset make_noise(double m, std::size_t count, std::size_t image_rows = 28,
                        std::size_t image_cols = 28);

/// round-half-up(originals · ratio_noise / ratio_original).
std::size_t noise_count(std::size_t originals, const NoiseMixSpec& spec);

/// Appends mean-intensity noise at the given ratio and shuffles with `rng`.
ImageDataset mix(const ImageDataset& original, const NoiseMixSpec& spec, Rng& rng);

/// Independent Bernoulli(intensity) draw per pixel.
Matrix binarize(const Matrix& batch, Rng& rng);

/// binarize() with kEvalBinarizationSeed.
Matrix binarize_for_eval(const ImageDataset& data);

/// Permutation of 0..n-1 derived from (seed, epoch), cut into batches; the
/// last batch may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch);

/// FNV-1a 64 of a file's bytes, hex encoded.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace rvae
