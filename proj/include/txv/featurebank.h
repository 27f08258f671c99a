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

#ifndef TXV_FEATUREBANK_H_
#define TXV_FEATUREBANK_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "txv/numerics.h"

namespace txv {

inline constexpr std::size_t kMaxIdBytes = 4096;

// Id-indexed collection of fixed-dimension vectors for one feature type of one
// modality. Iteration order is insertion order.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(std::string name, std::size_t dim);

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  // Throws DimensionError on wrong length, DataError on a duplicate or
  // oversized id.
  void Add(std::string id, Vec64 vector);

  bool Contains(const std::string& id) const { return index_.contains(id); }
  const Vec64* Find(const std::string& id) const;
  // Throws MissingItemError.
  const Vec64& Get(const std::string& id) const;

  const std::vector<std::string>& ids() const { return ids_; }
  const Vec64& row(std::size_t i) const { return rows_[i]; }

  friend bool operator==(const FeatureBank& a, const FeatureBank& b) {
    return a.name_ == b.name_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           a.rows_ == b.rows_;
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<Vec64> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Named banks of one modality, kept in insertion order.
class BankSet {
 public:
  void Add(FeatureBank bank);
  bool Contains(const std::string& name) const;
  const FeatureBank& Get(const std::string& name) const;  // MissingItemError
  const std::vector<FeatureBank>& banks() const { return banks_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return banks_.size(); }
  bool empty() const { return banks_.empty(); }

 private:
  std::vector<FeatureBank> banks_;
};

// Per-keyframe features of one video shot.
struct FrameFeatureSet {
  std::string video_id;
  std::vector<Vec64> frames;
};

// Coordinate-wise mean of the frames, summed in the given frame order.
Vec64 MeanPool(const FrameFeatureSet& frames);

// Concatenation of the item's vectors in bank order. Throws MissingItemError.
Vec64 ConcatFeatures(const std::vector<const FeatureBank*>& banks,
                     const std::string& id);

// Bank whose rows are ConcatFeatures over the ids of the first bank.
FeatureBank ConcatBanks(std::string name,
                        const std::vector<const FeatureBank*>& banks);

// Returns `v` rounded through 32-bit floats, the precision of stored banks.
Vec64 QuantizeF32(const Vec64& v);

// Binary .txvf format:
//   "TXVF" | u32 version=1 | u32 dim | u64 count |
//   count x (u32 id length, id bytes) | count*dim x f32, all little-endian.
void SaveBank(const FeatureBank& bank, const std::filesystem::path& path);
std::vector<std::uint8_t> EncodeBank(const FeatureBank& bank);
FeatureBank LoadBank(const std::filesystem::path& path, std::string name = "");
FeatureBank DecodeBank(std::span<const std::uint8_t> bytes, std::string name);

// TSV form: id TAB space-separated shortest-repr floats.
void SaveBankTsv(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank LoadBankTsv(const std::filesystem::path& path, std::string name = "");

struct Pair {
  std::string caption_id;
  std::string video_id;
  std::string caption_text;
};

struct PairList {
  std::vector<Pair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// caption_id TAB video_id [TAB caption text]
void SavePairs(const PairList& pairs, const std::filesystem::path& path);
PairList LoadPairs(const std::filesystem::path& path);

// Every referenced id must exist in every bank of its modality.
void ValidatePairs(const PairList& pairs, const BankSet& text,
                   const BankSet& video);

struct SynthFeature {
  std::string name;
  std::size_t dim = 0;
};

struct SynthSpec {
  std::size_t n_train = 200;
  std::size_t n_val = 50;
  std::size_t n_test = 50;
  std::size_t latent_dim = 16;
  std::vector<SynthFeature> text_features;
  std::vector<SynthFeature> video_features;
  double noise_sigma = 0.05;
  // Fraction of noise variance shared across the views of one item.
  double noise_correlation = 0.0;
  std::size_t distractor_count = 20;
  std::size_t captions_per_video = 1;
  std::uint64_t seed = 1;

  void Validate() const;  // ConfigError
};

// Named presets: "small", "e2e", "correlated".
SynthSpec SynthPreset(const std::string& name);

// One split: its text banks, its video gallery, and its caption-video pairs.
struct DataSplit {
  BankSet text;
  BankSet video;
  PairList pairs;
};

struct SynthData {
  DataSplit train;
  DataSplit val;
  DataSplit test;
  // Latent vector of every generated caption and video id.
  std::map<std::string, Vec64> latents;
};

// Each caption/video pair shares one latent z; every feature view is a fixed
// random linear map of z plus Gaussian noise. Distractor videos (fresh
// latents) are appended to the val and test galleries.
SynthData GenerateSynthetic(const SynthSpec& spec);

// Split directory layout: manifest.tsv (modality TAB name TAB file, in bank
// order), text_<name>.txvf, video_<name>.txvf, pairs.tsv.
std::vector<std::filesystem::path> SaveSplit(const DataSplit& split,
                                             const std::filesystem::path& dir);
DataSplit LoadSplit(const std::filesystem::path& dir);

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes);

}  // namespace txv

#endif  // TXV_FEATUREBANK_H_
