// Copyright 2026 The AHIQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "ahiq/checkpoint.hpp"
#include "support/oracles.hpp"

namespace ahiq {
namespace {

TensorMap sample_map() {
  TensorMap m;
  m.insert("vit.cls_token", {1, 1, 4}, std::vector<float>{0.5f, -1.25f, 3e-8f, -0.0f});
  m.insert("head.score1.bias", {2}, std::vector<double>{1.0 / 3, -2.5e300});
  m.insert("empty", {0, 3}, std::vector<float>{});
  m.insert("scalar", {}, std::vector<double>{7});
  return m;
}

std::size_t find_offset(const std::vector<std::uint8_t>& bytes, const std::string& needle) {
  auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
  return std::size_t(it - bytes.begin());
}

FormatError decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e;
  }
  ADD_FAILURE() << "decode succeeded";
  return FormatError("none", 0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto m = sample_map();
  const auto bytes = encode_checkpoint(m);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.size(), 4u);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const auto* t = back.find("vit.cls_token");
  ASSERT_NE(t, nullptr);
  EXPECT_TRUE(std::signbit(std::get<0>(t->values)[3]));
  EXPECT_EQ(back.find("empty")->shape, (Shape{0, 3}));
  EXPECT_EQ(back.find("scalar")->dtype(), DType::f64);
}

TEST(Checkpoint, EmptyMapAndFileRoundTrip) {
  EXPECT_TRUE(decode_checkpoint(encode_checkpoint(TensorMap{})).empty());
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(sample_map(), dir / "m.ahiqw");
  EXPECT_EQ(load_checkpoint(dir / "m.ahiqw"), sample_map());
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(sample_map());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "AHIQW1");
  EXPECT_EQ(bytes[6], 1);
  EXPECT_EQ(bytes[7], 4);  // tensor count, little-endian
  EXPECT_EQ(bytes[8] | bytes[9] | bytes[10], 0);
  const std::uint32_t name_len = bytes[11];
  EXPECT_EQ(name_len, std::string("vit.cls_token").size());
  const std::size_t crc_at = bytes.size() - 4;
  const std::uint32_t stored = bytes[crc_at] | bytes[crc_at + 1] << 8 | bytes[crc_at + 2] << 16 |
                               std::uint32_t(bytes[crc_at + 3]) << 24;
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), crc_at);
  EXPECT_EQ(stored, crc.checksum());
}

TEST(Checkpoint, BadMagicAtOffsetZero) {
  auto bytes = encode_checkpoint(sample_map());
  bytes[2] = 'X';
  EXPECT_EQ(decode_error(bytes).offset(), 0u);
}

TEST(Checkpoint, BadVersionAtOffsetSix) {
  auto bytes = encode_checkpoint(sample_map());
  bytes[6] = 2;
  EXPECT_EQ(decode_error(bytes).offset(), 6u);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const auto bytes = encode_checkpoint(sample_map());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + long(n));
    EXPECT_THROW(decode_checkpoint(cut), FormatError) << "length " << n;
  }
}

TEST(Checkpoint, EverySingleByteCorruptionIsDetected) {
  const auto bytes = encode_checkpoint(sample_map());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (std::uint8_t mask : {0x01, 0x80}) {
      auto bad = bytes;
      bad[i] ^= mask;
      EXPECT_THROW(decode_checkpoint(bad), FormatError) << "byte " << i;
    }
  }
}

TEST(Checkpoint, DataCorruptionReportsChecksumOffset) {
  auto bytes = encode_checkpoint(sample_map());
  const std::size_t data_at = find_offset(bytes, "head.score1.bias") + 16 + 1 + 4 + 8;
  bytes[data_at] ^= 0x10;
  const auto e = decode_error(bytes);
  EXPECT_EQ(e.offset(), bytes.size() - 4);
  EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
}

TEST(Checkpoint, UnknownDtypeNamesTensor) {
  auto bytes = encode_checkpoint(sample_map());
  const std::size_t tag_at = find_offset(bytes, "scalar") + 6;
  bytes[tag_at] = 5;
  const auto e = decode_error(bytes);
  EXPECT_EQ(e.offset(), tag_at);
  EXPECT_NE(std::string(e.what()).find("scalar"), std::string::npos);
}

TEST(Checkpoint, TrailingBytesAreRejected) {
  auto bytes = encode_checkpoint(sample_map());
  bytes.push_back(0);
  EXPECT_EQ(decode_error(bytes).offset(), bytes.size() - 1);
}

TEST(Checkpoint, DuplicateInsertIsContractError) {
  TensorMap m;
  m.insert("a", {1}, std::vector<float>{1});
  EXPECT_ANY_THROW(m.insert("a", {1}, std::vector<float>{2}));
}

}  // namespace
}  // namespace ahiq
