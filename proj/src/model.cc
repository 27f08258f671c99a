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

#include <algorithm>
#include <cmath>
#include <thread>

#include "byte_io.h"
#include "json.hpp"
#include "txv/errors.h"
#include "txv/rng.h"

namespace txv {
namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[] = "TXVM";
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

void XavierUniform(Mat64& w, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double& v : w.mutable_values()) v = rng.Uniform(-limit, limit);
}

Affine MakeAffine(std::size_t out, std::size_t in) {
  return Affine{Mat64(out, in), Vec64(out)};
}

std::size_t LookupDim(const std::map<std::string, std::size_t>& dims,
                      const std::string& name, const char* modality) {
  const auto it = dims.find(name);
  if (it == dims.end() || it->second == 0) {
    throw ConfigError(std::string("unknown ") + modality + " feature '" + name + "'");
  }
  return it->second;
}

json EncoderToJson(const TextEncoderSpec& spec) {
  json j = {{"kind", EncoderKindName(spec.kind)}, {"features", spec.features}};
  if (spec.kind == EncoderKind::kTrainable) j["hidden_dim"] = spec.hidden_dim;
  return j;
}

std::span<const double> Concatenated(const TxVModel& model, std::size_t k,
                                     const FeatureLookup& lookup,
                                     std::vector<double>& scratch) {
  const auto& spec = model.config().text_encoders[k];
  if (spec.features.size() == 1) return lookup(spec.features[0]).values();
  scratch.clear();
  for (const auto& f : spec.features) {
    const auto v = lookup(f).values();
    scratch.insert(scratch.end(), v.begin(), v.end());
  }
  return scratch;
}

}  // namespace

TextEncoderSpec TextEncoderSpec::Identity(std::string feature) {
  return {EncoderKind::kIdentity, {std::move(feature)}, 0};
}

TextEncoderSpec TextEncoderSpec::Concat(std::vector<std::string> features) {
  return {EncoderKind::kConcat, std::move(features), 0};
}

TextEncoderSpec TextEncoderSpec::Trainable(std::vector<std::string> features,
                                           std::size_t hidden_dim) {
  return {EncoderKind::kTrainable, std::move(features), hidden_dim};
}

std::string TextEncoderSpec::Label() const {
  std::string out = EncoderKindName(kind);
  out += "(";
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i > 0) out += "+";
    out += features[i];
  }
  if (kind == EncoderKind::kTrainable) out += "," + std::to_string(hidden_dim);
  return out + ")";
}

const char* EncoderKindName(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kIdentity:
      return "identity";
    case EncoderKind::kConcat:
      return "concat";
    case EncoderKind::kTrainable:
      return "trainable";
  }
  return "?";
}

EncoderKind ParseEncoderKind(const std::string& name) {
  if (name == "identity") return EncoderKind::kIdentity;
  if (name == "concat") return EncoderKind::kConcat;
  if (name == "trainable") return EncoderKind::kTrainable;
  throw ConfigError("unknown text encoder kind '" + name + "'");
}

ModelConfig ModelConfig::FromBanks(std::vector<TextEncoderSpec> text_encoders,
                                   std::vector<std::string> video_features,
                                   std::size_t joint_dim, const BankSet& text,
                                   const BankSet& video) {
  ModelConfig config;
  for (const auto& enc : text_encoders) {
    for (const auto& f : enc.features) {
      if (!text.Contains(f)) throw ConfigError("unknown text feature '" + f + "'");
      config.text_dims[f] = text.Get(f).dim();
    }
  }
  for (const auto& f : video_features) {
    if (!video.Contains(f)) throw ConfigError("unknown video feature '" + f + "'");
    config.video_dims[f] = video.Get(f).dim();
  }
  config.text_encoders = std::move(text_encoders);
  config.video_features = std::move(video_features);
  config.joint_dim = joint_dim;
  return config;
}

TxVModel TxVModel::Init(const ModelConfig& config, std::uint64_t seed) {
  if (config.joint_dim == 0) throw ConfigError("joint_dim must be positive");
  if (config.text_encoders.empty()) throw ConfigError("need at least one text encoder");
  if (config.video_features.empty()) throw ConfigError("need at least one video feature");
  TxVModel model;
  model.config_ = config;
  model.seed_ = seed;
  for (const auto& enc : config.text_encoders) {
    if (enc.features.empty()) throw ConfigError("text encoder without features");
    if (enc.kind == EncoderKind::kIdentity && enc.features.size() != 1) {
      throw ConfigError("identity encoder takes exactly one feature");
    }
    if (enc.kind == EncoderKind::kTrainable && enc.hidden_dim == 0) {
      throw ConfigError("trainable encoder hidden_dim must be >= 1");
    }
    for (const auto& f : enc.features) LookupDim(config.text_dims, f, "text");
  }
  for (const auto& f : config.video_features) LookupDim(config.video_dims, f, "video");

  const std::size_t d = config.joint_dim;
  for (std::size_t k = 0; k < config.text_encoders.size(); ++k) {
    const auto& enc = config.text_encoders[k];
    if (enc.kind == EncoderKind::kTrainable) {
      model.trainable_slot_.push_back(model.encoders_.size());
      model.encoders_.push_back(MakeAffine(enc.hidden_dim, model.encoder_input_dim(k)));
    } else {
      model.trainable_slot_.push_back(kNoSlot);
    }
  }
  for (std::size_t k = 0; k < model.num_text_encoders(); ++k) {
    for (std::size_t l = 0; l < model.num_video_features(); ++l) {
      model.spaces_.push_back({MakeAffine(d, model.encoder_output_dim(k)),
                               MakeAffine(d, model.video_dim(l))});
    }
  }
  Rng rng(seed);
  for (auto& space : model.spaces_) {
    XavierUniform(space.text.weights, rng);
    XavierUniform(space.video.weights, rng);
  }
  for (auto& enc : model.encoders_) XavierUniform(enc.weights, rng);
  return model;
}

std::size_t TxVModel::encoder_input_dim(std::size_t k) const {
  std::size_t dim = 0;
  for (const auto& f : config_.text_encoders[k].features) {
    dim += LookupDim(config_.text_dims, f, "text");
  }
  return dim;
}

std::size_t TxVModel::encoder_output_dim(std::size_t k) const {
  const auto& enc = config_.text_encoders[k];
  return enc.kind == EncoderKind::kTrainable ? enc.hidden_dim : encoder_input_dim(k);
}

std::size_t TxVModel::video_dim(std::size_t l) const {
  return LookupDim(config_.video_dims, config_.video_features[l], "video");
}

Affine* TxVModel::encoder(std::size_t k) {
  const std::size_t slot = trainable_slot_.at(k);
  return slot == kNoSlot ? nullptr : &encoders_[slot];
}

const Affine* TxVModel::encoder(std::size_t k) const {
  const std::size_t slot = trainable_slot_.at(k);
  return slot == kNoSlot ? nullptr : &encoders_[slot];
}

std::vector<ParamView> TxVModel::Parameters() {
  std::vector<ParamView> out;
  for (std::size_t k = 0; k < num_text_encoders(); ++k) {
    for (std::size_t l = 0; l < num_video_features(); ++l) {
      JointSpace& s = space(k, l);
      const std::string prefix = "space[" + std::to_string(k) + "," + std::to_string(l) + "]";
      out.push_back({prefix + ".text.W", s.text.weights.mutable_values()});
      out.push_back({prefix + ".text.b", s.text.bias.mutable_values()});
      out.push_back({prefix + ".video.W", s.video.weights.mutable_values()});
      out.push_back({prefix + ".video.b", s.video.bias.mutable_values()});
    }
  }
  for (std::size_t k = 0; k < num_text_encoders(); ++k) {
    if (Affine* enc = encoder(k)) {
      const std::string prefix = "encoder[" + std::to_string(k) + "]";
      out.push_back({prefix + ".W", enc->weights.mutable_values()});
      out.push_back({prefix + ".b", enc->bias.mutable_values()});
    }
  }
  return out;
}

std::vector<ConstParamView> TxVModel::Parameters() const {
  std::vector<ConstParamView> out;
  for (auto& v : const_cast<TxVModel*>(this)->Parameters()) {
    out.push_back({std::move(v.name), v.values});
  }
  return out;
}

std::size_t TxVModel::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& p : Parameters()) n += p.values.size();
  return n;
}

Vec64 TxVModel::FlattenParameters() const {
  std::vector<double> flat;
  flat.reserve(ParameterCount());
  for (const auto& p : Parameters()) flat.insert(flat.end(), p.values.begin(), p.values.end());
  return Vec64(std::move(flat));
}

void TxVModel::SetParameters(std::span<const double> flat) {
  if (flat.size() != ParameterCount()) {
    throw DimensionError("SetParameters: got " + std::to_string(flat.size()) +
                         " values, model has " + std::to_string(ParameterCount()));
  }
  std::size_t pos = 0;
  for (auto& p : Parameters()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), p.values.size(),
                p.values.begin());
    pos += p.values.size();
  }
}

TextOutputs EncodeText(const TxVModel& model, const FeatureLookup& lookup,
                       std::vector<AffineReluCache>* caches) {
  TextOutputs out;
  out.reserve(model.num_text_encoders());
  if (caches != nullptr) {
    caches->clear();
    caches->resize(model.num_text_encoders());
  }
  std::vector<double> scratch;
  for (std::size_t k = 0; k < model.num_text_encoders(); ++k) {
    const auto input = Concatenated(model, k, lookup, scratch);
    if (input.size() != model.encoder_input_dim(k)) {
      throw DimensionError("text encoder " + std::to_string(k) + ": input dim " +
                           std::to_string(input.size()) + ", expected " +
                           std::to_string(model.encoder_input_dim(k)));
    }
    if (const Affine* enc = model.encoder(k)) {
      Vec64 y(enc->weights.rows());
      AffineReluForward(enc->weights, enc->bias.values(), input, nullptr,
                        y.mutable_values(),
                        caches != nullptr ? &(*caches)[k] : nullptr);
      out.push_back(std::move(y));
    } else {
      out.emplace_back(std::vector<double>(input.begin(), input.end()));
    }
  }
  return out;
}

TextOutputs EncodeText(const TxVModel& model, const BankSet& text,
                       const std::string& caption_id) {
  return EncodeText(model, [&](const std::string& feature) -> const Vec64& {
    return text.Get(feature).Get(caption_id);
  });
}

TextOutputs EncodeText(const TxVModel& model,
                       const std::map<std::string, Vec64>& features) {
  return EncodeText(model, [&](const std::string& feature) -> const Vec64& {
    const auto it = features.find(feature);
    if (it == features.end()) {
      throw MissingItemError("missing text feature '" + feature + "'");
    }
    return it->second;
  });
}

VideoInputs GatherVideo(const TxVModel& model, const BankSet& video,
                        const std::string& video_id) {
  VideoInputs out;
  for (std::size_t l = 0; l < model.num_video_features(); ++l) {
    const Vec64& v = video.Get(model.config().video_features[l]).Get(video_id);
    if (v.dim() != model.video_dim(l)) {
      throw DimensionError("video feature '" + model.config().video_features[l] +
                           "': bank dim " + std::to_string(v.dim()) +
                           ", model expects " + std::to_string(model.video_dim(l)));
    }
    out.push_back(&v);
  }
  return out;
}

std::pair<Vec64, Vec64> EmbedPair(const TxVModel& model, std::size_t k,
                                  std::size_t l, const Vec64& text_out,
                                  const Vec64& video_feat,
                                  const Vec64* text_mask,
                                  const Vec64* video_mask) {
  const JointSpace& s = model.space(k, l);
  return {AffineReluForward(s.text.weights, s.text.bias, text_out, text_mask, nullptr),
          AffineReluForward(s.video.weights, s.video.bias, video_feat, video_mask,
                            nullptr)};
}

double Similarity(const TxVModel& model, const TextOutputs& text,
                  const VideoInputs& video) {
  if (text.size() != model.num_text_encoders() ||
      video.size() != model.num_video_features()) {
    throw DimensionError("similarity: encoder/feature count mismatch");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < text.size(); ++k) {
    for (std::size_t l = 0; l < video.size(); ++l) {
      const auto [s, v] = EmbedPair(model, k, l, text[k], *video[l]);
      total += CosineSimilarity(s, v);
    }
  }
  return total;
}

double Similarity(const TxVModel& model, const BankSet& text,
                  const std::string& caption_id, const BankSet& video,
                  const std::string& video_id) {
  return Similarity(model, EncodeText(model, text, caption_id),
                    GatherVideo(model, video, video_id));
}

Mat64 SimilarityMatrix(const TxVModel& model, const BankSet& text,
                       const std::vector<std::string>& caption_ids,
                       const BankSet& video,
                       const std::vector<std::string>& video_ids,
                       std::size_t threads) {
  const std::size_t K = model.num_text_encoders();
  const std::size_t L = model.num_video_features();
  const std::size_t d = model.joint_dim();
  const std::size_t cells = K * L;

  // Embeddings laid out [item][k*L+l][d].
  std::vector<double> video_emb(video_ids.size() * cells * d);
  for (std::size_t j = 0; j < video_ids.size(); ++j) {
    const VideoInputs feats = GatherVideo(model, video, video_ids[j]);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t l = 0; l < L; ++l) {
        const JointSpace& s = model.space(k, l);
        AffineReluForward(s.video.weights, s.video.bias.values(), feats[l]->values(),
                          nullptr,
                          std::span(video_emb).subspan((j * cells + k * L + l) * d, d),
                          nullptr);
      }
    }
  }
  std::vector<double> text_emb(caption_ids.size() * cells * d);
  for (std::size_t i = 0; i < caption_ids.size(); ++i) {
    const TextOutputs outs = EncodeText(model, text, caption_ids[i]);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t l = 0; l < L; ++l) {
        const JointSpace& s = model.space(k, l);
        AffineReluForward(s.text.weights, s.text.bias.values(), outs[k].values(),
                          nullptr,
                          std::span(text_emb).subspan((i * cells + k * L + l) * d, d),
                          nullptr);
      }
    }
  }

  Mat64 out(caption_ids.size(), video_ids.size());
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const double> t(text_emb.data() + i * cells * d, cells * d);
      for (std::size_t j = 0; j < video_ids.size(); ++j) {
        const std::span<const double> v(video_emb.data() + j * cells * d, cells * d);
        double total = 0.0;
        for (std::size_t c = 0; c < cells; ++c) {
          total += CosineSimilarity(t.subspan(c * d, d), v.subspan(c * d, d));
        }
        out(i, j) = total;
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, caption_ids.size()));
  if (threads == 1) {
    fill_rows(0, caption_ids.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (caption_ids.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(caption_ids.size(), begin + chunk);
      if (begin < end) workers.emplace_back(fill_rows, begin, end);
    }
    for (auto& w : workers) w.join();
  }
  return out;
}

std::vector<std::uint8_t> EncodeCheckpoint(const TxVModel& model,
                                           const std::string& created_by) {
  const ModelConfig& cfg = model.config();
  json header;
  header["k"] = model.num_text_encoders();
  header["l"] = model.num_video_features();
  header["d"] = model.joint_dim();
  json encoders = json::array();
  for (const auto& e : cfg.text_encoders) encoders.push_back(EncoderToJson(e));
  header["text_encoders"] = encoders;
  header["video_features"] = cfg.video_features;
  header["dims"] = {{"text", cfg.text_dims}, {"video", cfg.video_dims}};
  header["seed"] = model.seed();
  header["created_by"] = created_by;
  header["training"] = json::parse(model.training_metadata());
  const std::string text = header.dump();

  internal::ByteWriter w;
  w.Bytes(kCheckpointMagic);
  w.U32(kCheckpointVersion);
  w.U64(text.size());
  w.Bytes(text);
  for (const auto& p : model.Parameters()) {
    for (double v : p.values) w.F32(static_cast<float>(v));
  }
  return std::move(w.bytes());
}

TxVModel DecodeCheckpoint(std::span<const std::uint8_t> bytes) {
  internal::ByteReader r(bytes);
  if (r.Bytes(4, "magic") != kCheckpointMagic) {
    throw FormatError("bad magic, expected TXVM", 0);
  }
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.U32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version),
                      version_at);
  }
  const std::uint64_t header_len = r.U64("header length");
  if (header_len > r.remaining()) r.Fail("truncated: header length exceeds file");
  const std::uint64_t header_at = r.offset();
  const std::string text = r.Bytes(header_len, "header");

  ModelConfig cfg;
  std::uint64_t seed = 0;
  std::size_t k = 0, l = 0;
  json training;
  auto field_error = [&](const std::string& field, const std::string& why) {
    return FormatError("checkpoint header field '" + field + "': " + why, header_at);
  };
  try {
    const json header = json::parse(text);
    for (const char* key : {"k", "l", "d", "text_encoders", "video_features", "dims", "seed"}) {
      if (!header.contains(key)) throw field_error(key, "missing");
    }
    k = header.at("k").get<std::size_t>();
    l = header.at("l").get<std::size_t>();
    cfg.joint_dim = header.at("d").get<std::size_t>();
    seed = header.at("seed").get<std::uint64_t>();
    for (const auto& e : header.at("text_encoders")) {
      TextEncoderSpec spec;
      spec.kind = ParseEncoderKind(e.at("kind").get<std::string>());
      spec.features = e.at("features").get<std::vector<std::string>>();
      spec.hidden_dim = e.value("hidden_dim", std::size_t{0});
      cfg.text_encoders.push_back(std::move(spec));
    }
    cfg.video_features = header.at("video_features").get<std::vector<std::string>>();
    cfg.text_dims = header.at("dims").at("text").get<std::map<std::string, std::size_t>>();
    cfg.video_dims = header.at("dims").at("video").get<std::map<std::string, std::size_t>>();
    training = header.value("training", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  }
  if (cfg.text_encoders.size() != k) {
    throw field_error("k", std::to_string(k) + " but " +
                               std::to_string(cfg.text_encoders.size()) + " encoders listed");
  }
  if (cfg.video_features.size() != l) {
    throw field_error("l", std::to_string(l) + " but " +
                               std::to_string(cfg.video_features.size()) + " features listed");
  }

  TxVModel model;
  try {
    model = TxVModel::Init(cfg, seed);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), header_at);
  }
  const std::uint64_t expected = model.ParameterCount();
  if (r.remaining() != expected * 4) {
    r.Fail("parameter blob size mismatch: header implies " + std::to_string(expected) +
           " floats (" + std::to_string(k * l) + " spaces), found " +
           std::to_string(r.remaining()) + " bytes");
  }
  for (auto& p : model.Parameters()) {
    for (double& v : p.values) {
      const float f = r.F32("parameters");
      if (!std::isfinite(f)) r.Fail("non-finite parameter in " + p.name);
      v = static_cast<double>(f);
    }
  }
  model.training_metadata_ = training.dump();
  return model;
}

void SaveCheckpoint(const TxVModel& model, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeCheckpoint(model));
}

TxVModel LoadCheckpoint(const std::filesystem::path& path) {
  try {
    return DecodeCheckpoint(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw e.WithContext(path.string());
  }
}

}  // namespace txv
