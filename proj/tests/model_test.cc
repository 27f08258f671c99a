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

#include "txv/model.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.h"
#include "txv/errors.h"

namespace txv {
namespace {

namespace fs = std::filesystem;

struct Fixture {
  BankSet text;
  BankSet video;
  std::vector<std::string> captions;
  std::vector<std::string> videos;
};

Fixture MakeFixture(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Fixture f;
  FeatureBank bow("bow", 6), w2v("w2v", 4), r152("r152", 5), clip("clip", 3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string c = "c" + std::to_string(i), v = "v" + std::to_string(i);
    bow.Add(c, Vec64(oracle::RandomMatrix(1, 6, gen)[0]));
    w2v.Add(c, Vec64(oracle::RandomMatrix(1, 4, gen)[0]));
    r152.Add(v, Vec64(oracle::RandomMatrix(1, 5, gen)[0]));
    clip.Add(v, Vec64(oracle::RandomMatrix(1, 3, gen)[0]));
    f.captions.push_back(c);
    f.videos.push_back(v);
  }
  f.text.Add(bow);
  f.text.Add(w2v);
  f.video.Add(r152);
  f.video.Add(clip);
  return f;
}

ModelConfig MakeConfig(const Fixture& f, std::size_t d = 8) {
  return ModelConfig::FromBanks(
      {TextEncoderSpec::Identity("bow"), TextEncoderSpec::Concat({"bow", "w2v"}),
       TextEncoderSpec::Trainable({"w2v"}, 5)},
      {"r152", "clip"}, d, f.text, f.video);
}

std::vector<double> ReluAffine(const Affine& a, const std::vector<double>& x) {
  std::vector<double> y(a.weights.rows());
  for (std::size_t r = 0; r < y.size(); ++r) {
    long double pre = a.bias[r];
    for (std::size_t c = 0; c < x.size(); ++c) pre += a.weights(r, c) * x[c];
    y[r] = pre > 0 ? static_cast<double>(pre) : 0.0;
  }
  return y;
}

std::vector<double> Cat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Loop-form similarity written against the fixture's fixed encoder layout.
long double OracleSimilarity(const TxVModel& m, const Fixture& f, const std::string& c,
                             const std::string& v) {
  const auto bow = f.text.Get("bow").Get(c).vector();
  const auto w2v = f.text.Get("w2v").Get(c).vector();
  const std::vector<std::vector<double>> text_out{bow, Cat(bow, w2v),
                                                  ReluAffine(*m.encoder(2), w2v)};
  const std::vector<std::vector<double>> video_in{f.video.Get("r152").Get(v).vector(),
                                                  f.video.Get("clip").Get(v).vector()};
  long double total = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t l = 0; l < 2; ++l) {
      total += oracle::Cosine(ReluAffine(m.space(k, l).text, text_out[k]),
                              ReluAffine(m.space(k, l).video, video_in[l]));
    }
  }
  return total;
}

TEST(ModelConfigTest, FromBanksRecordsDims) {
  const Fixture f = MakeFixture(2, 1);
  const ModelConfig cfg = MakeConfig(f);
  EXPECT_EQ(cfg.text_dims.at("bow"), 6u);
  EXPECT_EQ(cfg.video_dims.at("clip"), 3u);
  EXPECT_THROW(ModelConfig::FromBanks({TextEncoderSpec::Identity("nope")}, {"clip"}, 4,
                                      f.text, f.video),
               ConfigError);
  EXPECT_THROW(ModelConfig::FromBanks({TextEncoderSpec::Identity("bow")}, {"nope"}, 4,
                                      f.text, f.video),
               ConfigError);
}

TEST(ModelInitTest, ShapesAndParameterCount) {
  const Fixture f = MakeFixture(2, 1);
  const TxVModel m = TxVModel::Init(MakeConfig(f, 8), 3);
  EXPECT_EQ(m.num_text_encoders(), 3u);
  EXPECT_EQ(m.num_video_features(), 2u);
  EXPECT_EQ(m.encoder_output_dim(0), 6u);
  EXPECT_EQ(m.encoder_output_dim(1), 10u);
  EXPECT_EQ(m.encoder_output_dim(2), 5u);
  EXPECT_EQ(m.encoder_input_dim(2), 4u);
  EXPECT_EQ(m.space(1, 0).text.weights.cols(), 10u);
  EXPECT_EQ(m.space(1, 0).video.weights.cols(), 5u);
  EXPECT_EQ(m.space(2, 1).video.weights.rows(), 8u);
  EXPECT_EQ(m.encoder(0), nullptr);
  ASSERT_NE(m.encoder(2), nullptr);
  // Text side: (6+1)*8 + (10+1)*8 + (5+1)*8, twice (one per video feature).
  // Video side: (5+1)*8 + (3+1)*8, three times. Encoder: (4+1)*5.
  const std::size_t expected = 2 * (7 + 11 + 6) * 8 + 3 * (6 + 4) * 8 + 25;
  EXPECT_EQ(m.ParameterCount(), expected);
  EXPECT_EQ(m.FlattenParameters().dim(), expected);
  EXPECT_EQ(m.Parameters().size(), 6u * 4u + 2u);
}

TEST(ModelInitTest, DeterministicAndSeedSensitive) {
  const Fixture f = MakeFixture(2, 1);
  const ModelConfig cfg = MakeConfig(f);
  EXPECT_EQ(TxVModel::Init(cfg, 5).FlattenParameters(),
            TxVModel::Init(cfg, 5).FlattenParameters());
  EXPECT_NE(TxVModel::Init(cfg, 5).FlattenParameters(),
            TxVModel::Init(cfg, 6).FlattenParameters());
}

TEST(ModelInitTest, XavierBoundsAndZeroBias) {
  const Fixture f = MakeFixture(2, 1);
  const TxVModel m = TxVModel::Init(MakeConfig(f, 8), 5);
  const JointSpace& s = m.space(1, 0);
  const double bound = std::sqrt(6.0 / (8 + 10));
  for (double v : s.text.weights.values()) EXPECT_LE(std::abs(v), bound);
  for (double v : s.text.bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(ModelInitTest, NoWeightSharingAcrossSpaces) {
  const Fixture f = MakeFixture(2, 1);
  TxVModel m = TxVModel::Init(MakeConfig(f), 5);
  const Mat64 before = m.space(0, 1).text.weights;
  m.space(0, 0).text.weights(0, 0) += 1.0;
  EXPECT_EQ(m.space(0, 1).text.weights, before);
}

TEST(ModelInitTest, InvalidConfigs) {
  const Fixture f = MakeFixture(2, 1);
  ModelConfig cfg = MakeConfig(f);
  cfg.joint_dim = 0;
  EXPECT_THROW(TxVModel::Init(cfg, 1), ConfigError);
  cfg = MakeConfig(f);
  cfg.video_features.clear();
  EXPECT_THROW(TxVModel::Init(cfg, 1), ConfigError);
  cfg = MakeConfig(f);
  cfg.text_encoders[2].hidden_dim = 0;
  EXPECT_THROW(TxVModel::Init(cfg, 1), ConfigError);
  EXPECT_THROW(ParseEncoderKind("bert"), ConfigError);
}

TEST(ModelParametersTest, SetParametersRoundTrip) {
  const Fixture f = MakeFixture(2, 1);
  TxVModel m = TxVModel::Init(MakeConfig(f), 5);
  Vec64 flat = m.FlattenParameters();
  for (std::size_t i = 0; i < flat.dim(); ++i) flat[i] = static_cast<double>(i) * 1e-3;
  m.SetParameters(flat.values());
  EXPECT_EQ(m.FlattenParameters(), flat);
  EXPECT_EQ(m.space(0, 0).text.weights(0, 0), 0.0);
  EXPECT_EQ(m.space(0, 0).text.weights(0, 1), 1e-3);
  EXPECT_THROW(m.SetParameters(std::vector<double>(3)), DimensionError);
}

TEST(EncoderTest, ConcatenatesInDeclaredOrder) {
  const Fixture f = MakeFixture(2, 1);
  const TxVModel m = TxVModel::Init(MakeConfig(f), 5);
  const TextOutputs out = EncodeText(m, f.text, "c1");
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], f.text.Get("bow").Get("c1"));
  EXPECT_EQ(out[1].vector(),
            Cat(f.text.Get("bow").Get("c1").vector(), f.text.Get("w2v").Get("c1").vector()));
  const auto hidden = ReluAffine(*m.encoder(2), f.text.Get("w2v").Get("c1").vector());
  ASSERT_EQ(out[2].dim(), hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) EXPECT_NEAR(out[2][i], hidden[i], 1e-12);
}

TEST(EncoderTest, ConcatOf500And768Gives1268) {
  BankSet text, video;
  FeatureBank a("a", 500), b("b", 768), v("v", 4);
  a.Add("c", Vec64(500, 0.5));
  b.Add("c", Vec64(768, -0.5));
  v.Add("x", Vec64(4, 1.0));
  text.Add(a);
  text.Add(b);
  video.Add(v);
  const TxVModel m = TxVModel::Init(
      ModelConfig::FromBanks({TextEncoderSpec::Concat({"a", "b"})}, {"v"}, 4, text, video), 1);
  EXPECT_EQ(EncodeText(m, text, "c")[0].dim(), 1268u);
  EXPECT_EQ(m.space(0, 0).text.weights.cols(), 1268u);
}

TEST(EncoderTest, MissingOrWrongFeatures) {
  const Fixture f = MakeFixture(2, 1);
  const TxVModel m = TxVModel::Init(MakeConfig(f), 5);
  EXPECT_THROW(EncodeText(m, f.text, "nope"), MissingItemError);
  std::map<std::string, Vec64> partial{{"bow", Vec64(6)}};
  EXPECT_THROW(EncodeText(m, partial), MissingItemError);
  std::map<std::string, Vec64> wrong{{"bow", Vec64(6)}, {"w2v", Vec64(7)}};
  EXPECT_THROW(EncodeText(m, wrong), DimensionError);

  BankSet bad_video;
  FeatureBank r152("r152", 9), clip("clip", 3);
  r152.Add("v0", Vec64(9));
  clip.Add("v0", Vec64(3));
  bad_video.Add(r152);
  bad_video.Add(clip);
  try {
    GatherVideo(m, bad_video, "v0");
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("9"), std::string::npos);
    EXPECT_NE(msg.find("5"), std::string::npos);
  }
}

TEST(SimilarityTest, MatchesLoopOracleAndBound) {
  const Fixture f = MakeFixture(12, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TxVModel m = TxVModel::Init(MakeConfig(f), seed);
    for (const auto& c : f.captions) {
      for (const auto& v : f.videos) {
        const double s = Similarity(m, f.text, c, f.video, v);
        EXPECT_NEAR(s, static_cast<double>(OracleSimilarity(m, f, c, v)), 1e-10);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 6.0 + 1e-12);
      }
    }
  }
}

TEST(SimilarityTest, SingleSpaceEqualsCosine) {
  const Fixture f = MakeFixture(3, 4);
  const TxVModel m = TxVModel::Init(
      ModelConfig::FromBanks({TextEncoderSpec::Identity("w2v")}, {"clip"}, 4, f.text, f.video),
      2);
  const auto t = ReluAffine(m.space(0, 0).text, f.text.Get("w2v").Get("c0").vector());
  const auto v = ReluAffine(m.space(0, 0).video, f.video.Get("clip").Get("v2").vector());
  EXPECT_NEAR(Similarity(m, f.text, "c0", f.video, "v2"),
              static_cast<double>(oracle::Cosine(t, v)), 1e-12);
}

TEST(SimilarityTest, EmbedPairMatchesManualProjection) {
  const Fixture f = MakeFixture(2, 4);
  const TxVModel m = TxVModel::Init(MakeConfig(f), 2);
  const TextOutputs text = EncodeText(m, f.text, "c0");
  const auto [t, v] = EmbedPair(m, 1, 1, text[1], f.video.Get("clip").Get("v1"));
  EXPECT_EQ(t.dim(), 8u);
  const auto expect_v = ReluAffine(m.space(1, 1).video, f.video.Get("clip").Get("v1").vector());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(v[i], expect_v[i], 1e-12);
}

TEST(SimilarityMatrixTest, EqualsLoopedSimilarityAndIsThreadInvariant) {
  const Fixture f = MakeFixture(17, 9);
  const TxVModel m = TxVModel::Init(MakeConfig(f), 1);
  const Mat64 one = SimilarityMatrix(m, f.text, f.captions, f.video, f.videos, 1);
  ASSERT_EQ(one.rows(), 17u);
  ASSERT_EQ(one.cols(), 17u);
  for (std::size_t i = 0; i < 17; ++i) {
    for (std::size_t j = 0; j < 17; ++j) {
      EXPECT_EQ(one(i, j), Similarity(m, f.text, f.captions[i], f.video, f.videos[j]));
    }
  }
  for (std::size_t threads : {2u, 3u, 8u}) {
    EXPECT_EQ(SimilarityMatrix(m, f.text, f.captions, f.video, f.videos, threads), one);
  }
}

TEST(CheckpointTest, RoundTripPreservesScoresUpToF32) {
  const fs::path dir = fs::path(::testing::TempDir()) / "txv_model_ckpt";
  fs::create_directories(dir);
  const Fixture f = MakeFixture(6, 2);
  TxVModel m = TxVModel::Init(MakeConfig(f), 7);
  m.set_training_metadata(R"({"optimizer":"adam"})");
  SaveCheckpoint(m, dir / "m.txvm");
  const TxVModel back = LoadCheckpoint(dir / "m.txvm");
  EXPECT_EQ(back.config().text_encoders, m.config().text_encoders);
  EXPECT_EQ(back.config().video_features, m.config().video_features);
  EXPECT_EQ(back.seed(), 7u);
  EXPECT_EQ(back.training_metadata(), R"({"optimizer":"adam"})");
  const Vec64 a = m.FlattenParameters(), b = back.FlattenParameters();
  for (std::size_t i = 0; i < a.dim(); ++i) {
    EXPECT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
  }
  for (const auto& c : f.captions) {
    EXPECT_NEAR(Similarity(m, f.text, c, f.video, "v0"),
                Similarity(back, f.text, c, f.video, "v0"), 1e-5);
  }
  EXPECT_EQ(EncodeCheckpoint(back), EncodeCheckpoint(m));
}

TEST(CheckpointTest, CorruptedFilesAreRejected) {
  const Fixture f = MakeFixture(2, 2);
  const TxVModel m = TxVModel::Init(MakeConfig(f), 7);
  const auto good = EncodeCheckpoint(m);

  auto bad_magic = good;
  bad_magic[3] = 'X';
  EXPECT_THROW(DecodeCheckpoint(bad_magic), FormatError);

  auto bad_version = good;
  bad_version[4] = 9;
  try {
    DecodeCheckpoint(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }

  auto short_blob = good;
  short_blob.resize(short_blob.size() - 4);
  try {
    DecodeCheckpoint(short_blob);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter blob size mismatch"), std::string::npos);
  }

  // Rewrite "k":3 as "k":2 so the header disagrees with its encoder list.
  std::string bytes(good.begin(), good.end());
  const auto pos = bytes.find("\"k\":3");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + 4] = '2';
  const std::vector<std::uint8_t> bad_k(bytes.begin(), bytes.end());
  try {
    DecodeCheckpoint(bad_k);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("'k'"), std::string::npos);
  }

  auto huge_header = good;
  huge_header[8 + 7] = 0x7f;
  EXPECT_THROW(DecodeCheckpoint(huge_header), FormatError);

  EXPECT_THROW(LoadCheckpoint("/nonexistent/m.txvm"), IoError);
}

}  // namespace
}  // namespace txv
