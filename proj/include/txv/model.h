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

#ifndef TXV_MODEL_H_
#define TXV_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "txv/featurebank.h"
#include "txv/numerics.h"

namespace txv {

enum class EncoderKind { kIdentity, kConcat, kTrainable };

// A textual encoder f_s^k: forwards one feature, concatenates several, or
// applies one trainable affine+ReLU layer to their concatenation.
struct TextEncoderSpec {
  EncoderKind kind = EncoderKind::kIdentity;
  std::vector<std::string> features;
  std::size_t hidden_dim = 0;  // trainable only

  static TextEncoderSpec Identity(std::string feature);
  static TextEncoderSpec Concat(std::vector<std::string> features);
  static TextEncoderSpec Trainable(std::vector<std::string> features,
                                   std::size_t hidden_dim);

  std::string Label() const;
  friend bool operator==(const TextEncoderSpec&, const TextEncoderSpec&) = default;
};

const char* EncoderKindName(EncoderKind kind);
EncoderKind ParseEncoderKind(const std::string& name);  // ConfigError

struct Affine {
  Mat64 weights;  // out x in
  Vec64 bias;     // out
};

// One joint space (k, l): a text-side and a video-side projection into R^d.
struct JointSpace {
  Affine text;
  Affine video;
};

struct ModelConfig {
  std::vector<TextEncoderSpec> text_encoders;
  std::vector<std::string> video_features;
  std::size_t joint_dim = 64;
  std::map<std::string, std::size_t> text_dims;
  std::map<std::string, std::size_t> video_dims;

  // Fills dims from the banks' headers.
  static ModelConfig FromBanks(std::vector<TextEncoderSpec> text_encoders,
                               std::vector<std::string> video_features,
                               std::size_t joint_dim, const BankSet& text,
                               const BankSet& video);
};

// Named view of one parameter tensor, in checkpoint order.
template <typename T>
struct BasicParamView {
  std::string name;
  std::span<T> values;
};
using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

// Encoder outputs f_s^1..f_s^K for one caption.
using TextOutputs = std::vector<Vec64>;
// Feature vectors g_v^1..g_v^L for one video; pointers into feature banks.
using VideoInputs = std::vector<const Vec64*>;
using FeatureLookup = std::function<const Vec64&(const std::string& feature)>;

class TxVModel {
 public:
  // Xavier-uniform weights, zero biases. Throws ConfigError.
  static TxVModel Init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t num_text_encoders() const { return config_.text_encoders.size(); }
  std::size_t num_video_features() const { return config_.video_features.size(); }
  std::size_t joint_dim() const { return config_.joint_dim; }
  std::uint64_t seed() const { return seed_; }

  // Input dim of encoder k's FC layers, i.e. the encoder output dim.
  std::size_t encoder_output_dim(std::size_t k) const;
  std::size_t encoder_input_dim(std::size_t k) const;
  std::size_t video_dim(std::size_t l) const;

  JointSpace& space(std::size_t k, std::size_t l) {
    return spaces_[k * num_video_features() + l];
  }
  const JointSpace& space(std::size_t k, std::size_t l) const {
    return spaces_[k * num_video_features() + l];
  }
  // Parameters of a trainable encoder, null for identity/concat.
  Affine* encoder(std::size_t k);
  const Affine* encoder(std::size_t k) const;

  // Order: for k, for l: text W, text b, video W, video b; then trainable
  // encoders in encoder order (W, b).
  std::vector<ParamView> Parameters();
  std::vector<ConstParamView> Parameters() const;
  std::size_t ParameterCount() const;
  Vec64 FlattenParameters() const;
  void SetParameters(std::span<const double> flat);

  // Free-form JSON object stored in the checkpoint header.
  const std::string& training_metadata() const { return training_metadata_; }
  void set_training_metadata(std::string json) { training_metadata_ = std::move(json); }

 private:
  friend TxVModel DecodeCheckpoint(std::span<const std::uint8_t> bytes);
  TxVModel() = default;

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<JointSpace> spaces_;
  std::vector<std::size_t> trainable_slot_;  // per encoder, index or npos
  std::vector<Affine> encoders_;
  std::string training_metadata_ = "{}";
};

// Runs every text encoder. When `caches` is non-null it receives one cache per
// encoder (empty for non-trainable kinds). Throws MissingItemError.
TextOutputs EncodeText(const TxVModel& model, const FeatureLookup& lookup,
                       std::vector<AffineReluCache>* caches = nullptr);
TextOutputs EncodeText(const TxVModel& model, const BankSet& text,
                       const std::string& caption_id);
TextOutputs EncodeText(const TxVModel& model,
                       const std::map<std::string, Vec64>& features);

VideoInputs GatherVideo(const TxVModel& model, const BankSet& video,
                        const std::string& video_id);

// (s_k, v_l) = (ReLU(FC_text(text_out)), ReLU(FC_video(video_feat))).
std::pair<Vec64, Vec64> EmbedPair(const TxVModel& model, std::size_t k,
                                  std::size_t l, const Vec64& text_out,
                                  const Vec64& video_feat,
                                  const Vec64* text_mask = nullptr,
                                  const Vec64* video_mask = nullptr);

// Sum over the K x L grid of cosine similarities, k outer, l inner.
double Similarity(const TxVModel& model, const TextOutputs& text,
                  const VideoInputs& video);
double Similarity(const TxVModel& model, const BankSet& text,
                  const std::string& caption_id, const BankSet& video,
                  const std::string& video_id);

// Q x D matrix of Similarity; rows follow `caption_ids`, columns `video_ids`.
// Rows may be split across `threads` workers; each entry's summation order is
// fixed so the result is independent of the thread count.
Mat64 SimilarityMatrix(const TxVModel& model, const BankSet& text,
                       const std::vector<std::string>& caption_ids,
                       const BankSet& video,
                       const std::vector<std::string>& video_ids,
                       std::size_t threads = 1);

// Binary .txvm checkpoint:
//   "TXVM" | u32 version=1 | u64 header length | JSON header |
//   f32 parameters in Parameters() order.
std::vector<std::uint8_t> EncodeCheckpoint(const TxVModel& model,
                                           const std::string& created_by = "txv");
TxVModel DecodeCheckpoint(std::span<const std::uint8_t> bytes);
void SaveCheckpoint(const TxVModel& model, const std::filesystem::path& path);
TxVModel LoadCheckpoint(const std::filesystem::path& path);

}  // namespace txv

#endif  // TXV_MODEL_H_
