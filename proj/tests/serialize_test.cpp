#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "clids/data.hpp"
#include "clids/error.hpp"
#include "clids/serialize.hpp"

using namespace clids;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a clids::Error";
  return ErrorKind::IoError;
}

ModelGraph<float> trained_ish(std::uint64_t seed) {
  auto m = build_model<float>(ModelConfig{}, seed);
  const auto ds = data::synth_generate(32, seed, data::Difficulty::Noisy);
  forward(m, data::feature_tensor<float>(ds), nn::Mode::Train);
  return m;
}

void bump_checksum(std::vector<std::uint8_t>& bytes, std::size_t at, std::uint8_t value) {
  const int delta = int(value) - int(bytes[at]);
  bytes[at] = value;
  std::uint64_t sum = 0;
  for (int i = 0; i < 8; ++i) sum |= std::uint64_t(bytes[bytes.size() - 8 + i]) << (8 * i);
  sum += std::uint64_t(std::int64_t(delta));
  for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = std::uint8_t(sum >> (8 * i));
}

}  // namespace

TEST(Weights, HeaderLayout) {
  const auto m = build_model<float>(ModelConfig{}, 1);
  const auto bytes = encode_weights(m);
  ASSERT_GT(bytes.size(), 14u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "CLIDS");
  EXPECT_EQ(bytes[5], 0x01);
  // First record: u16 name length, name, u8 rank, u32 dims.
  const std::size_t name_len = bytes[6] | (bytes[7] << 8);
  EXPECT_EQ(std::string(bytes.begin() + 8, bytes.begin() + 8 + name_len), "conv0.kernel");
  EXPECT_EQ(bytes[8 + name_len], 3);
  const std::size_t dim0 = bytes[9 + name_len] | (bytes[10 + name_len] << 8);
  EXPECT_EQ(dim0, 32u);
  // First float follows the three dims.
  float first;
  std::memcpy(&first, &bytes[9 + name_len + 12], 4);
  EXPECT_EQ(first, m.conv_blocks[0].conv.kernels[0]);
}

TEST(Weights, SizeAccountsForEveryTensor) {
  const auto m = build_model<float>(ModelConfig{}, 1);
  std::size_t expected = 6 + 8;
  for (const auto& p : m.parameters()) expected += 2 + p.name.size() + 1 + 4 * p.tensor->rank() + 4 * p.tensor->size();
  EXPECT_EQ(encode_weights(m).size(), expected);
}

TEST(Weights, ChecksumIsByteSum) {
  const auto bytes = encode_weights(build_model<float>(ModelConfig{}, 2));
  std::uint64_t sum = 0, stored = 0;
  for (std::size_t i = 0; i + 8 < bytes.size(); ++i) sum += bytes[i];
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t(bytes[bytes.size() - 8 + i]) << (8 * i);
  EXPECT_EQ(stored, sum);
  EXPECT_EQ(byte_checksum(std::span(bytes).first(bytes.size() - 8)), sum);
}

TEST(Weights, RoundTripIsBitExact) {
  const auto m = trained_ish(3);
  const auto path = std::filesystem::temp_directory_path() / "clids_weights_test.bin";
  save_weights(m, path);
  auto restored = build_model<float>(ModelConfig{}, 77);
  load_weights(path, restored);
  const auto a = m.parameters();
  const auto b = restored.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].tensor->shape(), b[i].tensor->shape());
    EXPECT_EQ(std::memcmp(a[i].tensor->values().data(), b[i].tensor->values().data(), 4 * a[i].tensor->size()), 0)
        << a[i].name;
  }
  EXPECT_EQ(encode_weights(restored), encode_weights(m));
}

TEST(Weights, CorruptionIsDetected) {
  const auto good = encode_weights(trained_ish(4));
  auto model = build_model<float>(ModelConfig{}, 4);
  const auto before = encode_weights(model);

  auto flipped = good;
  flipped[100] ^= 0x10;
  EXPECT_EQ(kind_of([&] { decode_weights(flipped, model); }), ErrorKind::CorruptFile);
  auto magic = good;
  bump_checksum(magic, 0, 'X');
  EXPECT_EQ(kind_of([&] { decode_weights(magic, model); }), ErrorKind::CorruptFile);
  auto version = good;
  bump_checksum(version, 5, 0x02);
  EXPECT_EQ(kind_of([&] { decode_weights(version, model); }), ErrorKind::CorruptFile);
  auto name = good;
  bump_checksum(name, 8, 'k');
  EXPECT_EQ(kind_of([&] { decode_weights(name, model); }), ErrorKind::CorruptFile);
  std::vector<std::uint8_t> truncated(good.begin(), good.begin() + 40);
  EXPECT_EQ(kind_of([&] { decode_weights(truncated, model); }), ErrorKind::CorruptFile);
  EXPECT_EQ(kind_of([&] { decode_weights(std::vector<std::uint8_t>{}, model); }), ErrorKind::CorruptFile);
  // A failed decode leaves the model untouched.
  EXPECT_EQ(encode_weights(model), before);

  ModelConfig other;
  other.lstm_hidden = 32;
  auto mismatched = build_model<float>(other, 4);
  EXPECT_EQ(kind_of([&] { decode_weights(good, mismatched); }), ErrorKind::CorruptFile);
  EXPECT_EQ(kind_of([&] { load_weights("/nonexistent/w.bin", model); }), ErrorKind::IoError);
}
