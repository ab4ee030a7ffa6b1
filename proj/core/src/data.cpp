#include "rvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;  // "SHUFF"

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void shuffle(std::vector<std::size_t>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.uniform_index(i)]);
  }
}

}  // namespace

std::size_t ImageDataset::count_of(Provenance p) const {
  return static_cast<std::size_t>(std::ranges::count(provenance, p));
}

NoiseMixSpec NoiseMixSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  auto parse_side = [&](std::string_view side) {
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(side.data(), side.data() + side.size(), v);
    if (ec != std::errc() || ptr != side.data() + side.size() || v == 0) {
      throw ConfigError("invalid noise ratio '" + text + "': expected R:S with positive integers");
    }
    return v;
  };
  if (colon == std::string::npos) {
    throw ConfigError("invalid noise ratio '" + text + "': expected R:S");
  }
  const std::string_view view(text);
  return {parse_side(view.substr(0, colon)), parse_side(view.substr(colon + 1))};
}

std::string NoiseMixSpec::to_string() const {
  return std::to_string(ratio_original) + ":" + std::to_string(ratio_noise);
}

ImageDataset load_idx(const std::filesystem::path& images_path) {
  std::ifstream in(images_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + images_path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 16) {
    throw FormatError(images_path.string() + ": truncated IDX header (" +
                      std::to_string(bytes.size()) + " bytes, need 16)");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError(images_path.string() + ": bad IDX magic " + hex32(magic) +
                      " at offset 0, expected " + hex32(kIdxImageMagic));
  }
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  const std::size_t expected = 16 + n * rows * cols;
  if (bytes.size() < expected) {
    throw FormatError(images_path.string() + ": truncated IDX payload, " +
                      std::to_string(bytes.size()) + " bytes but header implies " +
                      std::to_string(expected));
  }
  ImageDataset data;
  data.image_rows = rows;
  data.image_cols = cols;
  data.pixels = Matrix(n, rows * cols);
  auto px = data.pixels.values();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  data.provenance.assign(n, Provenance::original);
  return data;
}

void write_idx(const ImageDataset& data, const std::filesystem::path& images_path) {
  std::ofstream out(images_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + images_path.string() + " for writing");
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(data.count()));
  write_be32(out, static_cast<std::uint32_t>(data.image_rows));
  write_be32(out, static_cast<std::uint32_t>(data.image_cols));
  std::vector<char> payload(data.pixels.size());
  const auto px = data.pixels.values();
  for (std::size_t i = 0; i < px.size(); ++i) {
    payload[i] = static_cast<char>(static_cast<unsigned char>(std::lround(px[i] * 255.0)));
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + images_path.string());
}

void write_provenance_csv(const ImageDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "index,provenance\n";
  for (std::size_t i = 0; i < data.count(); ++i) {
    out << i << ',' << (data.provenance[i] == Provenance::noise ? "noise" : "original") << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ImageDataset take_first(const ImageDataset& data, std::size_t n) {
  n = std::min(n, data.count());
  ImageDataset out;
  out.image_rows = data.image_rows;
  out.image_cols = data.image_cols;
  const auto begin = data.pixels.values().begin();
  out.pixels = Matrix(n, data.dim(),
                      std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n * data.dim())));
  out.provenance.assign(data.provenance.begin(),
                        data.provenance.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

ImageDataset concat(const ImageDataset& a, const ImageDataset& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("concat: image size " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  std::vector<double> px(a.pixels.values().begin(), a.pixels.values().end());
  px.insert(px.end(), b.pixels.values().begin(), b.pixels.values().end());
  ImageDataset out;
  out.image_rows = a.image_rows;
  out.image_cols = a.image_cols;
  out.pixels = Matrix(a.count() + b.count(), a.dim(), std::move(px));
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  return out;
}

double mean_intensity(const ImageDataset& data) {
  if (data.count() == 0 || data.dim() == 0) throw DomainError("mean_intensity: empty dataset");
  // Neumaier compensated sum: MNIST has ~4.7e7 pixels.
  double sum = 0.0;
  double carry = 0.0;
  for (double v : data.pixels.values()) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  const auto px = data.pixels.values();
  return (sum + carry) / static_cast<double>(px.size());
}

ImageDataset make_noise(double m, std::size_t count, std::size_t image_rows,
                        std::size_t image_cols) {
  if (!(m >= 0.0 && m <= 1.0)) {
    throw DomainError("make_noise: intensity " + std::to_string(m) + " outside [0, 1]");
  }
  if (count == 0) throw DomainError("make_noise: count must be >= 1");
  ImageDataset out;
  out.image_rows = image_rows;
  out.image_cols = image_cols;
  out.pixels = Matrix(count, image_rows * image_cols, m);
  out.provenance.assign(count, Provenance::noise);
  return out;
}

std::size_t noise_count(std::size_t originals, const NoiseMixSpec& spec) {
  // floor(N·s/r + ½) in integers.
  const std::uint64_t num = 2ULL * originals * spec.ratio_noise + spec.ratio_original;
  return static_cast<std::size_t>(num / (2ULL * spec.ratio_original));
}

ImageDataset mix(const ImageDataset& original, const NoiseMixSpec& spec, Rng& rng) {
  if (original.count() == 0) throw DomainError("mix: empty original dataset");
  const std::size_t extra = noise_count(original.count(), spec);
  const ImageDataset combined =
      extra == 0 ? original
                 : concat(original, make_noise(mean_intensity(original), extra, original.image_rows,
                                               original.image_cols));
  std::vector<std::size_t> order(combined.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);

  ImageDataset out;
  out.image_rows = combined.image_rows;
  out.image_cols = combined.image_cols;
  out.pixels = gather_rows(combined.pixels, order);
  out.provenance.reserve(order.size());
  for (std::size_t idx : order) out.provenance.push_back(combined.provenance[idx]);
  return out;
}

Matrix binarize(const Matrix& batch, Rng& rng) {
  Matrix out(batch.rows(), batch.cols());
  const auto in = batch.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] >= 0.0 && in[i] <= 1.0)) {
      throw DomainError("binarize: intensity " + std::to_string(in[i]) + " at entry " +
                        std::to_string(i) + " outside [0, 1]");
    }
    o[i] = rng.uniform() < in[i] ? 1.0 : 0.0;
  }
  return out;
}

Matrix binarize_for_eval(const ImageDataset& data) {
  Rng rng(kEvalBinarizationSeed);
  return binarize(data.pixels, rng);
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw DomainError("minibatches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kShuffleStream, epoch));
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(hash));
  return out;
}

}  // namespace rvae
