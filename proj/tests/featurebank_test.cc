/*
 * Copyright 2026 The TxV Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "txv/featurebank.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.h"
#include "txv/errors.h"

namespace txv {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("txv_featurebank_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

FeatureBank SmallBank() {
  FeatureBank bank("r152", 3);
  bank.Add("v1", Vec64{0.5, -1.25, 3.0});
  bank.Add("video two", Vec64{1e-3, 2.0, -7.5});
  return bank;
}

void PutU32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

TEST(MeanPoolTest, Examples) {
  EXPECT_EQ(MeanPool({"v", {Vec64{1, 2}, Vec64{3, 4}}}), (Vec64{2, 3}));
  EXPECT_EQ(MeanPool({"v", {Vec64{5, 5, 5}}}), (Vec64{5, 5, 5}));
}

TEST(MeanPoolTest, Errors) {
  EXPECT_THROW(MeanPool({"v", {}}), EmptyInputError);
  EXPECT_THROW(MeanPool({"v", {Vec64{1, 2}, Vec64{1, 2, 3}}}), DimensionError);
}

TEST(MeanPoolTest, MatchesArithmeticMean) {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 20; ++t) {
    const auto raw = oracle::RandomMatrix(1 + t, 5, gen);
    FrameFeatureSet frames{"v", {}};
    for (const auto& r : raw) frames.frames.emplace_back(r);
    const Vec64 pooled = MeanPool(frames);
    for (std::size_t c = 0; c < 5; ++c) {
      long double sum = 0;
      for (const auto& r : raw) sum += r[c];
      EXPECT_NEAR(pooled[c], static_cast<double>(sum / raw.size()), 1e-12);
    }
  }
}

TEST(ConcatTest, Examples) {
  FeatureBank a("a", 2), b("b", 1), big_a("x", 500), big_b("y", 768);
  a.Add("v", Vec64{1, 2});
  b.Add("v", Vec64{3});
  EXPECT_EQ(ConcatFeatures({&a, &b}, "v"), (Vec64{1, 2, 3}));
  big_a.Add("v", Vec64(500, 1.0));
  big_b.Add("v", Vec64(768, 2.0));
  EXPECT_EQ(ConcatFeatures({&big_a, &big_b}, "v").dim(), 1268u);
}

TEST(ConcatTest, MissingItemThrows) {
  FeatureBank a("a", 2), b("b", 1);
  a.Add("v", Vec64{1, 2});
  b.Add("w", Vec64{3});
  EXPECT_THROW(ConcatFeatures({&a, &b}, "v"), MissingItemError);
  EXPECT_THROW(ConcatBanks("ab", {&a, &b}), MissingItemError);
}

TEST(ConcatTest, BanksPreserveOrder) {
  FeatureBank a("a", 1), b("b", 1);
  a.Add("x", Vec64{1});
  a.Add("y", Vec64{2});
  b.Add("y", Vec64{20});
  b.Add("x", Vec64{10});
  const FeatureBank ab = ConcatBanks("ab", {&a, &b});
  EXPECT_EQ(ab.dim(), 2u);
  EXPECT_EQ(ab.ids(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(ab.Get("y"), (Vec64{2, 20}));
}

TEST(FeatureBankTest, AddValidation) {
  FeatureBank bank("b", 2);
  bank.Add("x", Vec64{1, 2});
  EXPECT_THROW(bank.Add("x", Vec64{1, 2}), DataError);
  EXPECT_THROW(bank.Add("y", Vec64{1}), DimensionError);
  EXPECT_THROW(bank.Add(std::string(4097, 'a'), Vec64{1, 2}), DataError);
  bank.Add(std::string(4096, 'a'), Vec64{1, 2});
  EXPECT_THROW(bank.Get("missing"), MissingItemError);
  EXPECT_EQ(bank.Find("missing"), nullptr);
  EXPECT_THROW(FeatureBank("z", 0), DimensionError);
}

TEST(BinaryFormatTest, RoundTripIsExactAfterQuantization) {
  const FeatureBank bank = SmallBank();
  const auto bytes = EncodeBank(bank);
  const FeatureBank back = DecodeBank(bytes, "r152");
  ASSERT_EQ(back.ids(), bank.ids());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(back.row(i), QuantizeF32(bank.row(i)));
  }
  EXPECT_EQ(EncodeBank(back), bytes);
}

TEST(BinaryFormatTest, LayoutIsLittleEndian) {
  FeatureBank bank("b", 1);
  bank.Add("ab", Vec64{1.0});
  const auto bytes = EncodeBank(bank);
  const std::vector<std::uint8_t> expected{
      'T', 'X', 'V', 'F', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,
      2,   0,   0,   0,   'a', 'b', 0x00, 0x00, 0x80, 0x3f};
  EXPECT_EQ(bytes, expected);
}

TEST(BinaryFormatTest, FileRoundTripUsesStemAsDefaultName) {
  const fs::path dir = TempDir("file");
  SaveBank(SmallBank(), dir / "clip.txvf");
  const FeatureBank back = LoadBank(dir / "clip.txvf");
  EXPECT_EQ(back.name(), "clip");
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(LoadBank(dir / "clip.txvf", "other").name(), "other");
  EXPECT_THROW(LoadBank(dir / "absent.txvf"), IoError);
}

TEST(BinaryFormatTest, CorruptedHeadersReportOffsets) {
  const auto good = EncodeBank(SmallBank());

  auto bad_magic = good;
  bad_magic[0] = 'X';
  try {
    DecodeBank(bad_magic, "b");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }

  auto bad_version = good;
  PutU32(bad_version, 4, 2);
  try {
    DecodeBank(bad_version, "b");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }

  auto more_rows = good;
  more_rows[12] = 3;  // count 2 -> 3; the third id length reads row bytes.
  EXPECT_THROW(DecodeBank(more_rows, "b"), FormatError);

  auto truncated = good;
  truncated.resize(truncated.size() - 4);
  try {
    DecodeBank(truncated, "b");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("declared 2 rows but only 1 present"),
              std::string::npos);
  }

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(DecodeBank(trailing, "b"), FormatError);

  auto zero_dim = good;
  PutU32(zero_dim, 8, 0);
  EXPECT_THROW(DecodeBank(zero_dim, "b"), FormatError);

  const std::vector<std::uint8_t> tiny{'T', 'X'};
  EXPECT_THROW(DecodeBank(tiny, "b"), FormatError);
}

TEST(BinaryFormatTest, DuplicateIdInFileIsFormatError) {
  FeatureBank bank("b", 1);
  bank.Add("aa", Vec64{1});
  bank.Add("ab", Vec64{2});
  auto bytes = EncodeBank(bank);
  bytes[20 + 4 + 2 + 4 + 1] = 'a';  // second id "ab" -> "aa"
  EXPECT_THROW(DecodeBank(bytes, "b"), FormatError);
}

TEST(TextFormatTest, RoundTripIsExact) {
  const fs::path dir = TempDir("tsv");
  FeatureBank bank("w2v", 3);
  bank.Add("a", Vec64{0.1, 1.0 / 3.0, -2e-300});
  bank.Add("b", Vec64{123456789.125, -0.0, 5});
  SaveBankTsv(bank, dir / "w2v.tsv");
  const FeatureBank back = LoadBankTsv(dir / "w2v.tsv");
  EXPECT_EQ(back, bank);
}

TEST(TextFormatTest, MalformedLinesThrow) {
  const fs::path dir = TempDir("tsv_bad");
  {
    std::ofstream(dir / "a.tsv") << "x 1 2\n";
  }
  EXPECT_THROW(LoadBankTsv(dir / "a.tsv"), FormatError);
  {
    std::ofstream(dir / "b.tsv") << "x\t1 zz\n";
  }
  EXPECT_THROW(LoadBankTsv(dir / "b.tsv"), FormatError);
  {
    std::ofstream(dir / "c.tsv") << "x\t1 2\ny\t1\n";
  }
  EXPECT_THROW(LoadBankTsv(dir / "c.tsv"), FormatError);
}

TEST(PairsTest, RoundTripKeepsCaptionText) {
  const fs::path dir = TempDir("pairs");
  PairList pairs;
  pairs.pairs.push_back({"c1", "v1", "a man\tcooks"});
  pairs.pairs.push_back({"c2", "v1", ""});
  SavePairs(pairs, dir / "pairs.tsv");
  const PairList back = LoadPairs(dir / "pairs.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.pairs[0].caption_text, "a man\tcooks");
  EXPECT_EQ(back.pairs[1].video_id, "v1");
  {
    std::ofstream(dir / "bad.tsv") << "only_one_field\n";
  }
  EXPECT_THROW(LoadPairs(dir / "bad.tsv"), FormatError);
}

TEST(SyntheticTest, ShapesAndIds) {
  const SynthSpec spec = SynthPreset("small");
  const SynthData data = GenerateSynthetic(spec);
  EXPECT_EQ(data.train.pairs.size(), spec.n_train);
  EXPECT_EQ(data.val.pairs.size(), spec.n_val);
  EXPECT_EQ(data.test.text.Get("bow").size(), spec.n_test);
  EXPECT_EQ(data.test.video.Get("r152").size(), spec.n_test + spec.distractor_count);
  EXPECT_EQ(data.train.video.Get("clip").size(), spec.n_train);
  EXPECT_EQ(data.train.text.names(), (std::vector<std::string>{"bow", "w2v", "clip"}));
  EXPECT_EQ(data.train.video.Get("rx101").dim(), 48u);
  ValidatePairs(data.test.pairs, data.test.text, data.test.video);
  // Ids never repeat across splits.
  for (const auto& id : data.val.video.Get("r152").ids()) {
    EXPECT_FALSE(data.train.video.Get("r152").Contains(id));
  }
}

TEST(SyntheticTest, DeterministicPerSeed) {
  SynthSpec spec = SynthPreset("e2e");
  const SynthData a = GenerateSynthetic(spec);
  const SynthData b = GenerateSynthetic(spec);
  EXPECT_EQ(EncodeBank(a.test.video.Get("clip")), EncodeBank(b.test.video.Get("clip")));
  spec.seed = 2;
  const SynthData c = GenerateSynthetic(spec);
  EXPECT_NE(EncodeBank(a.test.video.Get("clip")), EncodeBank(c.test.video.Get("clip")));
}

TEST(SyntheticTest, NoiselessViewsPreserveLatentGeometry) {
  SynthSpec spec = SynthPreset("e2e");
  spec.noise_sigma = 0.0;
  spec.n_train = 20;
  const SynthData data = GenerateSynthetic(spec);
  // Captions and videos of the same item share a latent, so noiseless views
  // are deterministic functions of it: equal latents give equal views.
  const auto& pairs = data.train.pairs.pairs;
  for (const auto& p : pairs) {
    EXPECT_EQ(data.latents.at(p.caption_id), data.latents.at(p.video_id));
  }
  spec.captions_per_video = 2;
  const SynthData two = GenerateSynthetic(spec);
  const auto& w2v = two.train.text.Get("w2v");
  const auto& tp = two.train.pairs.pairs;
  ASSERT_EQ(tp[0].video_id, tp[1].video_id);
  EXPECT_EQ(w2v.Get(tp[0].caption_id), w2v.Get(tp[1].caption_id));
}

TEST(SyntheticTest, InvalidSpecsThrow) {
  SynthSpec spec = SynthPreset("small");
  spec.n_val = 0;
  EXPECT_THROW(GenerateSynthetic(spec), ConfigError);
  spec = SynthPreset("small");
  spec.noise_correlation = 1.5;
  EXPECT_THROW(GenerateSynthetic(spec), ConfigError);
  spec = SynthPreset("small");
  spec.video_features.clear();
  EXPECT_THROW(GenerateSynthetic(spec), ConfigError);
  EXPECT_THROW(SynthPreset("huge"), ConfigError);
}

TEST(SplitIoTest, SaveLoadRoundTrip) {
  const fs::path dir = TempDir("split");
  const SynthData data = GenerateSynthetic(SynthPreset("e2e"));
  SaveSplit(data.val, dir);
  const DataSplit back = LoadSplit(dir);
  EXPECT_EQ(back.text.names(), data.val.text.names());
  EXPECT_EQ(back.video.names(), data.val.video.names());
  EXPECT_EQ(back.pairs.size(), data.val.pairs.size());
  EXPECT_EQ(EncodeBank(back.video.Get("r152")), EncodeBank(data.val.video.Get("r152")));
}

TEST(SplitIoTest, DanglingPairIsMissingItem) {
  const fs::path dir = TempDir("split_bad");
  const SynthData data = GenerateSynthetic(SynthPreset("e2e"));
  SaveSplit(data.val, dir);
  {
    std::ofstream(dir / "pairs.tsv", std::ios::app) << "c0\tnope\n";
  }
  EXPECT_THROW(LoadSplit(dir), MissingItemError);
}

}  // namespace
}  // namespace txv
