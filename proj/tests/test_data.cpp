#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "giamic/giamic.hpp"
#include "oracles.hpp"

using namespace giamic;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.n_samples = 40;
  s.lengths = {3, 4, 5};
  s.seed = 9;
  return s;
}

void put_u32_at(std::vector<std::uint8_t>& bytes, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

FormatErrc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode accepted malformed bytes";
  return FormatErrc::kIo;
}

}  // namespace

TEST(Generate, ShapesLabelsAndModalities) {
  const auto spec = small_spec();
  const auto ds = generate(spec);
  ASSERT_EQ(ds.size(), 40u);
  EXPECT_EQ(ds.classes, 4u);
  for (const auto& s : ds.samples) {
    EXPECT_LT(s.label, 4u);
    for (std::size_t m = 0; m < 3; ++m) {
      EXPECT_EQ(s.seqs[m].modality, kModalities[m]);
      EXPECT_EQ(s.seqs[m].t, spec.lengths[m]);
      EXPECT_EQ(s.seqs[m].d, spec.raw_dims[m]);
      EXPECT_EQ(s.seqs[m].values.size(), std::size_t(spec.lengths[m]) * spec.raw_dims[m]);
    }
  }
}

TEST(Generate, BalancedLabelsByDefault) {
  const auto ds = generate(small_spec());
  std::vector<int> counts(4, 0);
  for (const auto& s : ds.samples) ++counts[s.label];
  EXPECT_EQ(counts, (std::vector<int>{10, 10, 10, 10}));
}

TEST(Generate, PriorsUseLargestRemainder) {
  auto spec = small_spec();
  spec.n_samples = 10;
  spec.classes = 3;
  spec.priors = {0.5, 0.3, 0.2};
  const auto ds = generate(spec);
  std::vector<int> counts(3, 0);
  for (const auto& s : ds.samples) ++counts[s.label];
  EXPECT_EQ(counts, (std::vector<int>{5, 3, 2}));
}

TEST(Generate, PureFunctionOfSpec) {
  EXPECT_EQ(generate(small_spec()), generate(small_spec()));
  auto other = small_spec();
  other.seed = 10;
  EXPECT_NE(generate(small_spec()), generate(other));
}

TEST(Generate, RejectsSpecWithoutSignalOrNoise) {
  auto spec = small_spec();
  spec.alpha = 0;
  spec.beta = {0, 0, 0};
  spec.noise_std = 0;
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(Generate, RejectsSingleClassAndZeroLength) {
  auto spec = small_spec();
  spec.classes = 1;
  EXPECT_THROW(generate(spec), ConfigError);
  spec = small_spec();
  spec.lengths = {0, 1, 1};
  EXPECT_THROW(generate(spec), ConfigError);
  spec = small_spec();
  spec.priors = {1, 1};
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(Generate, SeparableSpecIsLinearlySeparable) {
  SynthSpec spec;  // alpha 2, noise 0.1
  spec.n_samples = 256;
  EXPECT_GE(oracle::logistic_baseline_ua(generate(spec)), 0.9);
}

TEST(Generate, SharedSignalAloneMakesEachModalityLinearlyDecodable) {
  SynthSpec spec;
  spec.n_samples = 200;
  spec.beta = {0, 0, 0};
  spec.delta = 0;
  spec.alpha = 2;
  const auto ds = generate(spec);
  for (std::size_t m = 0; m < 3; ++m) {
    Dataset single = ds;
    for (auto& s : single.samples)
      for (std::size_t o = 0; o < 3; ++o)
        if (o != m) s.seqs[o].values.assign(s.seqs[o].values.size(), 0.0f);
    EXPECT_GE(oracle::logistic_baseline_ua(single), 0.9) << "modality " << m;
  }
}

TEST(Split, ContiguousFoldsEarlierFoldsLarger) {
  auto spec = small_spec();
  spec.n_samples = 3;
  spec.classes = 3;
  const auto ds = generate(spec);
  const auto [train0, test0] = split(ds, 2, 0);
  EXPECT_EQ(train0.size(), 1u);
  EXPECT_EQ(test0.size(), 2u);
  EXPECT_EQ(test0.samples[0], ds.samples[0]);
  const auto [train1, test1] = split(ds, 2, 1);
  EXPECT_EQ(train1.size(), 2u);
  EXPECT_EQ(test1.size(), 1u);
  EXPECT_EQ(test1.samples[0], ds.samples[2]);
  EXPECT_THROW(split(ds, 1, 0), ConfigError);
  EXPECT_THROW(split(ds, 2, 2), ConfigError);
}

TEST(Split, FoldsPartitionTheDataset) {
  const auto ds = generate(small_spec());
  std::size_t total = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    const auto [tr, te] = split(ds, 5, f);
    EXPECT_EQ(tr.size() + te.size(), ds.size());
    total += te.size();
  }
  EXPECT_EQ(total, ds.size());
}

TEST(Gmic, RoundTripIsBitwise) {
  const auto ds = generate(small_spec());
  const auto bytes = encode(ds);
  const auto back = decode(bytes);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(encode(back), bytes);
}

TEST(Gmic, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "giamic_test_roundtrip.gmic";
  const auto ds = generate(small_spec());
  write_features(ds, path);
  EXPECT_EQ(read_features(path), ds);
  EXPECT_EQ(fnv1a(read_bytes(path)), fingerprint(ds));
  std::filesystem::remove(path);
}

TEST(Gmic, EmptyDatasetRoundTrips) {
  Dataset empty{4, {}};
  const auto bytes = encode(empty);
  EXPECT_EQ(bytes.size(), 16u);
  EXPECT_EQ(decode(bytes), empty);
}

TEST(Gmic, HeaderLayout) {
  const auto bytes = encode(generate(small_spec()));
  EXPECT_EQ(std::memcmp(bytes.data(), "GMIC", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 40);
  EXPECT_EQ(bytes[12], 4);
  // label, then t and d of the video stream
  EXPECT_EQ(bytes[20], 3);
  EXPECT_EQ(bytes[24], 32);
}

TEST(Gmic, BadMagic) {
  auto bytes = encode(generate(small_spec()));
  bytes[0] = 'X';
  EXPECT_EQ(decode_error(bytes), FormatErrc::kBadMagic);
}

TEST(Gmic, VersionMismatch) {
  auto bytes = encode(generate(small_spec()));
  put_u32_at(bytes, 4, 2);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kVersionMismatch);
}

TEST(Gmic, Truncated) {
  auto bytes = encode(generate(small_spec()));
  bytes.resize(bytes.size() - 3);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kTruncated);
  EXPECT_EQ(decode_error({'G', 'M', 'I', 'C', 1, 0}), FormatErrc::kTruncated);
  EXPECT_EQ(decode_error({'G', 'M'}), FormatErrc::kBadMagic);
}

TEST(Gmic, TrailingBytes) {
  auto bytes = encode(generate(small_spec()));
  bytes.push_back(0);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kTrailingData);
}

TEST(Gmic, LabelOutOfRange) {
  auto bytes = encode(generate(small_spec()));
  put_u32_at(bytes, 16, 4);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kInvalidLabel);
}

TEST(Gmic, ImplausibleDimensions) {
  auto bytes = encode(generate(small_spec()));
  put_u32_at(bytes, 20, 0x40000000u);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kDimensionOverflow);
  bytes = encode(generate(small_spec()));
  put_u32_at(bytes, 24, 0);
  EXPECT_EQ(decode_error(bytes), FormatErrc::kDimensionOverflow);
}

TEST(Gmic, MissingFile) {
  try {
    read_features("/nonexistent/giamic.gmic");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrc::kIo);
  }
}

TEST(Gmic, FingerprintChangesWithContent) {
  auto ds = generate(small_spec());
  const auto before = fingerprint(ds);
  ds.samples[3].seqs[1].values[2] += 1.0f;
  EXPECT_NE(fingerprint(ds), before);
}
