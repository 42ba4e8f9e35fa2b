#include "clids/serialize.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string_view>

namespace clids {

namespace {

constexpr std::string_view kMagic = "CLIDS";

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) fail(ErrorKind::CorruptFile, "weights file truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t le(int width) {
    auto s = take(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t byte_checksum(std::span<const std::uint8_t> bytes) noexcept {
  return std::accumulate(bytes.begin(), bytes.end(), std::uint64_t{0},
                         [](std::uint64_t acc, std::uint8_t b) { return acc + b; });
}

std::vector<std::uint8_t> encode_weights(const ModelGraph<float>& model) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kWeightsVersion);
  for (const auto& p : model.parameters()) {
    w.le(p.name.size(), 2);
    for (char c : p.name) w.u8(static_cast<std::uint8_t>(c));
    const Shape& shape = p.tensor->shape();
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) w.le(d, 4);
    for (float v : p.tensor->data()) w.le(std::bit_cast<std::uint32_t>(v), 4);
  }
  const std::uint64_t sum = byte_checksum(w.data());
  w.le(sum, 8);
  return std::move(w.data());
}

void decode_weights(std::span<const std::uint8_t> bytes, ModelGraph<float>& model) {
  if (bytes.size() < kMagic.size() + 1 + 8) fail(ErrorKind::CorruptFile, "weights file too short");
  const auto body = bytes.first(bytes.size() - 8);
  Reader tail(bytes.last(8));
  if (tail.le(8) != byte_checksum(body)) fail(ErrorKind::CorruptFile, "weights checksum mismatch");

  Reader r(body);
  auto magic = r.take(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    fail(ErrorKind::CorruptFile, "bad weights magic");
  }
  const auto version = r.le(1);
  if (version != kWeightsVersion) {
    fail(ErrorKind::CorruptFile, "unsupported weights version " + std::to_string(version));
  }

  // Decode everything before touching the model so a bad file leaves it intact.
  auto params = model.parameters();
  std::vector<Tensor<float>> decoded;
  for (const auto& p : params) {
    auto name_bytes = r.take(r.le(2));
    const std::string name(name_bytes.begin(), name_bytes.end());
    if (name != p.name) {
      fail(ErrorKind::CorruptFile, "expected tensor '" + p.name + "', found '" + name + "'");
    }
    const std::size_t rank = r.le(1);
    Shape shape(rank);
    for (auto& d : shape) d = r.le(4);
    if (shape != p.tensor->shape()) {
      fail(ErrorKind::CorruptFile, "tensor '" + name + "' has shape " + shape_string(shape) +
                                       ", model expects " + shape_string(p.tensor->shape()));
    }
    std::vector<float> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    decoded.emplace_back(std::move(shape), std::move(data));
  }
  if (r.remaining() != 0) fail(ErrorKind::CorruptFile, "trailing bytes after last tensor");
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = std::move(decoded[i]);
}

void save_weights(const ModelGraph<float>& model, const std::filesystem::path& path) {
  const auto bytes = encode_weights(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

void load_weights(const std::filesystem::path& path, ModelGraph<float>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  decode_weights(bytes, model);
}

}  // namespace clids
