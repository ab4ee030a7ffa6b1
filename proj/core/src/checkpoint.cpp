#include "rvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

constexpr char kMagic[4] = {'R', 'V', 'A', 'E'};
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated at offset " + std::to_string(pos_) + " (size " +
                        std::to_string(bytes_.size()) + ")");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const VaeParams& params) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 8 * VaeParams::kTensorCount + 8 * params.parameter_count());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, VaeParams::kTensorCount);
  put_u32(out, 0);
  for (const Matrix* t : params.tensors()) {
    put_u32(out, static_cast<std::uint32_t>(t->rows()));
    put_u32(out, static_cast<std::uint32_t>(t->cols()));
  }
  for (const Matrix* t : params.tensors()) {
    for (double v : t->values()) put_f64(out, v);
  }
  return out;
}

VaeParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) {
    throw FormatError("checkpoint shorter than its 16-byte header (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint magic mismatch at offset 0: expected \"RVAE\"");
  }
  Reader in(bytes);
  (void)in.u32();  // magic, already checked
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " at offset 4");
  }
  const std::uint32_t count = in.u32();
  if (count != VaeParams::kTensorCount) {
    throw FormatError("checkpoint declares " + std::to_string(count) + " tensors at offset 8, " +
                      "expected " + std::to_string(VaeParams::kTensorCount));
  }
  (void)in.u32();

  std::array<std::pair<std::size_t, std::size_t>, VaeParams::kTensorCount> shapes{};
  for (auto& s : shapes) {
    s.first = in.u32();
    s.second = in.u32();
  }
  const VaeShape shape{shapes[0].first, shapes[0].second, shapes[6].second};
  if (shapes != VaeParams::tensor_shapes(shape)) {
    throw FormatError("checkpoint shape table is not a valid VAE layout: " + shape_table(shapes));
  }

  VaeParams params = VaeParams::zeros(shape);
  if (in.remaining() != 8 * params.parameter_count()) {
    throw FormatError("checkpoint payload has " + std::to_string(in.remaining()) +
                      " bytes after offset " + std::to_string(in.position()) + ", expected " +
                      std::to_string(8 * params.parameter_count()));
  }
  for (Matrix* t : params.tensors()) {
    for (double& v : t->values()) v = in.f64();
  }
  return params;
}

void save_checkpoint(const VaeParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

VaeParams load_checkpoint(const std::filesystem::path& path,
                          const std::optional<VaeShape>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  VaeParams params = deserialize_checkpoint(bytes);
  if (expected && params.shape() != *expected) {
    throw DimensionError("checkpoint " + path.string() + " has shapes [" +
                         shape_table(VaeParams::tensor_shapes(params.shape())) +
                         "] but the configured architecture needs [" +
                         shape_table(VaeParams::tensor_shapes(*expected)) + "]");
  }
  return params;
}

}  // namespace rvae
