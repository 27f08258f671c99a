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

#ifndef TXV_TRAINING_H_
#define TXV_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "txv/errors.h"
#include "txv/featurebank.h"
#include "txv/model.h"
#include "txv/numerics.h"

namespace txv {

class Rng;

enum class OptimizerKind { kAdam, kRmsprop };

const char* OptimizerName(OptimizerKind kind);
OptimizerKind ParseOptimizer(const std::string& name);  // ConfigError

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-4;
  double margin = 0.2;
  double dropout = 0.2;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 1;
  double lr_decay_per_epoch = 0.01;
  std::size_t plateau_patience = 3;
  double plateau_factor = 0.5;

  void Validate() const;  // ConfigError
};

// Per-row hardest negative video and per-column hardest negative caption of
// a batch similarity matrix whose diagonal holds the positives.
struct HardNegatives {
  std::vector<std::size_t> video_for_caption;  // argmax_{j != i} S[i][j]
  std::vector<std::size_t> caption_for_video;  // argmax_{i != j} S[i][j]
};

// Ties resolve to the lowest index. Throws BatchTooSmallError for Q < 2.
HardNegatives HardestNegatives(const Mat64& similarities);

struct SpaceLoss {
  double loss = 0.0;
  Mat64 grad;  // d loss / d S
};

// Improved marginal ranking loss of one joint space, averaged over the Q
// pairs: max(0, margin + S[i][v'] - S[i][i]) + max(0, margin + S[s'][i] - S[i][i]).
SpaceLoss MarginRankingLoss(const Mat64& similarities, double margin);

struct Batch {
  std::vector<std::string> caption_ids;
  std::vector<std::string> video_ids;

  std::size_t size() const { return caption_ids.size(); }
};

struct LossAndGrad {
  double loss = 0.0;
  // Same shape as the model; holds d loss / d parameter.
  TxVModel gradient;
};

struct DropoutSettings {
  double rate = 0.0;
  Rng* rng = nullptr;  // null disables dropout
};

// Sum over the K x L grid of MarginRankingLoss, with gradients for every
// parameter. Throws BatchTooSmallError, InvalidBatchError (repeated video id).
LossAndGrad TotalLoss(const TxVModel& model, const BankSet& text,
                      const BankSet& video, const Batch& batch, double margin,
                      DropoutSettings dropout = {});

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kRmspropDecay = 0.9;
inline constexpr double kOptimizerEpsilon = 1e-8;

// Adam (bias-corrected) or RMSprop without momentum over a flat parameter
// vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t size);

  OptimizerKind kind() const { return kind_; }
  std::size_t steps() const { return steps_; }

  // Throws NumericalError naming the first non-finite gradient coordinate.
  void Step(std::span<double> params, std::span<const double> grads, double lr);
  // Walks the model's parameter tensors; the error names the tensor.
  void Step(TxVModel& model, const TxVModel& gradient, double lr);

 private:
  void Update(std::span<double> params, std::span<const double> grads,
              std::size_t offset, double lr);

  OptimizerKind kind_;
  std::size_t steps_ = 0;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
};

// Shuffled batches of at most batch_size pairs with no repeated video id
// within a batch. A pair colliding with a video already in the batch is
// deferred to the next one. Batches smaller than 2 are dropped.
std::vector<std::vector<std::size_t>> MakeBatches(const PairList& pairs,
                                                  std::size_t batch_size,
                                                  Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_map = 0.0;
  double lr = 0.0;  // learning rate used during this epoch

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // epoch TAB loss TAB val_map TAB lr
  std::string ToTsv() const;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  TxVModel model;  // best validation mAP
  TrainHistory history;
  std::size_t best_epoch = 0;
  double best_val_map = 0.0;
};

// Per epoch: seeded shuffle, batched updates, validation mAP, then
// lr *= (1 - decay) and, after `plateau_patience` epochs without a new best,
// lr *= plateau_factor.
TrainResult Train(TxVModel model, const DataSplit& train, const DataSplit& val,
                  const TrainConfig& config);

struct EnsembleConfig {
  TrainConfig base;
  // Multiplies every member learning rate; 1 keeps the reference values.
  double lr_scale = 1.0;

  static constexpr double kLearningRates[3] = {1e-4, 5e-5, 1e-5};

  std::size_t size() const { return 6; }
  // {adam, rmsprop} x kLearningRates; member i uses seed base.seed + i.
  std::vector<TrainConfig> Members() const;
  static std::string MemberTag(std::size_t index);  // e.g. "adam_lr1e-04"
};

struct EnsembleMember {
  std::string tag;
  TrainConfig config;
  std::optional<TrainResult> result;
  std::string error;  // empty on success
  ErrorCategory error_category = ErrorCategory::kNumerical;
};

// Trains the six members independently (up to `workers` at a time). A failing
// member is reported in its `error` field; the others still complete.
std::vector<EnsembleMember> TrainEnsemble(const ModelConfig& model_config,
                                          const DataSplit& train,
                                          const DataSplit& val,
                                          const EnsembleConfig& ensemble,
                                          std::size_t workers = 1);

}  // namespace txv

#endif  // TXV_TRAINING_H_
