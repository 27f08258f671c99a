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

#include "txv/training.h"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "txv/errors.h"
#include "txv/evalmetrics.h"
#include "txv/rng.h"

namespace txv {
namespace {

void ZeroParameters(TxVModel& model) {
  for (auto& p : model.Parameters()) std::fill(p.values.begin(), p.values.end(), 0.0);
}

std::string LrTag(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0e", lr);
  return buf;
}

}  // namespace

const char* OptimizerName(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "rmsprop";
}

OptimizerKind ParseOptimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "rmsprop") return OptimizerKind::kRmsprop;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or rmsprop)");
}

void TrainConfig::Validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(margin >= 0.0)) throw ConfigError("train.margin must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout must lie in [0, 1)");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (!(lr_decay_per_epoch >= 0.0 && lr_decay_per_epoch < 1.0)) {
    throw ConfigError("train.lr_decay_per_epoch must lie in [0, 1)");
  }
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) {
    throw ConfigError("train.plateau_factor must lie in (0, 1]");
  }
}

HardNegatives HardestNegatives(const Mat64& s) {
  const std::size_t q = s.rows();
  if (s.cols() != q) throw DimensionError("hardest negatives: matrix is not square");
  if (q < 2) throw BatchTooSmallError("hardest negatives need a batch of at least 2");
  HardNegatives out{std::vector<std::size_t>(q), std::vector<std::size_t>(q)};
  for (std::size_t i = 0; i < q; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = best + 1; j < q; ++j) {
      if (j != i && s(i, j) > s(i, best)) best = j;
    }
    out.video_for_caption[i] = best;
  }
  for (std::size_t j = 0; j < q; ++j) {
    std::size_t best = j == 0 ? 1 : 0;
    for (std::size_t i = best + 1; i < q; ++i) {
      if (i != j && s(i, j) > s(best, j)) best = i;
    }
    out.caption_for_video[j] = best;
  }
  return out;
}

SpaceLoss MarginRankingLoss(const Mat64& s, double margin) {
  const HardNegatives neg = HardestNegatives(s);
  const std::size_t q = s.rows();
  const double w = 1.0 / static_cast<double>(q);
  SpaceLoss out{0.0, Mat64(q, q)};
  for (std::size_t i = 0; i < q; ++i) {
    const double positive = s(i, i);
    const std::size_t nv = neg.video_for_caption[i];
    const std::size_t nc = neg.caption_for_video[i];
    const double to_video = margin + s(i, nv) - positive;
    if (to_video > 0.0) {
      out.loss += to_video;
      out.grad(i, nv) += w;
      out.grad(i, i) -= w;
    }
    const double to_caption = margin + s(nc, i) - positive;
    if (to_caption > 0.0) {
      out.loss += to_caption;
      out.grad(nc, i) += w;
      out.grad(i, i) -= w;
    }
  }
  out.loss *= w;
  return out;
}

LossAndGrad TotalLoss(const TxVModel& model, const BankSet& text,
                      const BankSet& video, const Batch& batch, double margin,
                      DropoutSettings dropout) {
  const std::size_t q = batch.size();
  if (batch.video_ids.size() != q) {
    throw InvalidBatchError("batch has " + std::to_string(q) + " captions but " +
                            std::to_string(batch.video_ids.size()) + " videos");
  }
  if (q < 2) throw BatchTooSmallError("a training batch needs at least 2 pairs");
  {
    std::set<std::string> seen;
    for (const auto& v : batch.video_ids) {
      if (!seen.insert(v).second) {
        throw InvalidBatchError("video '" + v + "' appears twice in one batch");
      }
    }
  }
  const bool use_dropout = dropout.rng != nullptr && dropout.rate > 0.0;
  const std::size_t num_k = model.num_text_encoders();
  const std::size_t num_l = model.num_video_features();
  const std::size_t d = model.joint_dim();

  std::vector<TextOutputs> outs(q);
  std::vector<std::vector<AffineReluCache>> enc_caches(q);
  std::vector<VideoInputs> vids(q);
  for (std::size_t i = 0; i < q; ++i) {
    const std::string& cid = batch.caption_ids[i];
    outs[i] = EncodeText(
        model,
        [&](const std::string& f) -> const Vec64& { return text.Get(f).Get(cid); },
        &enc_caches[i]);
    vids[i] = GatherVideo(model, video, batch.video_ids[i]);
  }

  LossAndGrad result{0.0, model};
  ZeroParameters(result.gradient);
  // d loss / d encoder output, only for trainable encoders.
  std::vector<std::vector<std::vector<double>>> d_out(q, std::vector<std::vector<double>>(num_k));
  for (std::size_t k = 0; k < num_k; ++k) {
    if (model.encoder(k) == nullptr) continue;
    for (std::size_t i = 0; i < q; ++i) d_out[i][k].assign(model.encoder_output_dim(k), 0.0);
  }

  std::vector<AffineReluCache> text_cache(q), video_cache(q);
  Mat64 s_emb(q, d), v_emb(q, d), sims(q, q);
  for (std::size_t k = 0; k < num_k; ++k) {
    for (std::size_t l = 0; l < num_l; ++l) {
      const JointSpace& space = model.space(k, l);
      JointSpace& grad = result.gradient.space(k, l);
      for (std::size_t i = 0; i < q; ++i) {
        std::optional<Vec64> mask;
        if (use_dropout) mask = DropoutMask(outs[i][k].dim(), dropout.rate, *dropout.rng);
        AffineReluForward(space.text.weights, space.text.bias.values(), outs[i][k].values(),
                          mask ? &*mask : nullptr, s_emb.mutable_row(i), &text_cache[i]);
      }
      for (std::size_t j = 0; j < q; ++j) {
        std::optional<Vec64> mask;
        if (use_dropout) mask = DropoutMask(vids[j][l]->dim(), dropout.rate, *dropout.rng);
        AffineReluForward(space.video.weights, space.video.bias.values(), vids[j][l]->values(),
                          mask ? &*mask : nullptr, v_emb.mutable_row(j), &video_cache[j]);
      }
      for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
          sims(i, j) = CosineSimilarity(s_emb.row(i), v_emb.row(j));
        }
      }
      const SpaceLoss space_loss = MarginRankingLoss(sims, margin);
      result.loss += space_loss.loss;

      Mat64 ds(q, d), dv(q, d);
      for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
          const double g = space_loss.grad(i, j);
          if (g != 0.0) {
            CosineSimilarityBackward(s_emb.row(i), v_emb.row(j), g, ds.mutable_row(i),
                                     dv.mutable_row(j));
          }
        }
      }
      for (std::size_t i = 0; i < q; ++i) {
        AffineReluBackwardAccumulate(text_cache[i], ds.row(i), grad.text.weights,
                                     grad.text.bias.mutable_values(), d_out[i][k]);
        AffineReluBackwardAccumulate(video_cache[i], dv.row(i), grad.video.weights,
                                     grad.video.bias.mutable_values(), {});
      }
    }
  }
  for (std::size_t k = 0; k < num_k; ++k) {
    Affine* g = result.gradient.encoder(k);
    if (g == nullptr) continue;
    for (std::size_t i = 0; i < q; ++i) {
      AffineReluBackwardAccumulate(enc_caches[i][k], d_out[i][k], g->weights,
                                   g->bias.mutable_values(), {});
    }
  }
  if (!std::isfinite(result.loss)) throw NumericalError("training loss is not finite");
  return result;
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t size)
    : kind_(kind), first_moment_(kind == OptimizerKind::kAdam ? size : 0),
      second_moment_(size) {}

void Optimizer::Update(std::span<double> params, std::span<const double> grads,
                       std::size_t offset, double lr) {
  if (kind_ == OptimizerKind::kAdam) {
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& m = first_moment_[offset + i];
      double& v = second_moment_[offset + i];
      m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grads[i];
      v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grads[i] * grads[i];
      params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + kOptimizerEpsilon);
    }
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& v = second_moment_[offset + i];
      v = kRmspropDecay * v + (1.0 - kRmspropDecay) * grads[i] * grads[i];
      params[i] -= lr * grads[i] / (std::sqrt(v) + kOptimizerEpsilon);
    }
  }
}

void Optimizer::Step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || params.size() != second_moment_.size()) {
    throw DimensionError("optimizer: parameter/gradient/state sizes disagree");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("optimizer: non-finite gradient at index " + std::to_string(i));
    }
  }
  ++steps_;
  Update(params, grads, 0, lr);
}

void Optimizer::Step(TxVModel& model, const TxVModel& gradient, double lr) {
  auto params = model.Parameters();
  const auto grads = gradient.Parameters();
  if (params.size() != grads.size()) throw DimensionError("optimizer: model shapes disagree");
  std::size_t total = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].values.size() != grads[p].values.size()) {
      throw DimensionError("optimizer: shape mismatch in " + params[p].name);
    }
    for (double g : grads[p].values) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in " + params[p].name);
    }
    total += params[p].values.size();
  }
  if (total != second_moment_.size()) throw DimensionError("optimizer: state size mismatch");
  ++steps_;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Update(params[p].values, grads[p].values, offset, lr);
    offset += params[p].values.size();
  }
}

std::vector<std::vector<std::size_t>> MakeBatches(const PairList& pairs,
                                                  std::size_t batch_size,
                                                  Rng& rng) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.Shuffle(std::span(order));
  std::deque<std::size_t> queue(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  while (!queue.empty()) {
    std::vector<std::size_t> batch;
    std::vector<std::size_t> deferred;
    std::set<std::string> videos;
    while (!queue.empty() && batch.size() < batch_size) {
      const std::size_t i = queue.front();
      queue.pop_front();
      if (videos.insert(pairs.pairs[i].video_id).second) {
        batch.push_back(i);
      } else {
        deferred.push_back(i);
      }
    }
    queue.insert(queue.begin(), deferred.begin(), deferred.end());
    if (batch.size() >= 2) batches.push_back(std::move(batch));
  }
  return batches;
}

std::string TrainHistory::ToTsv() const {
  std::string out = "epoch\tloss\tval_map\tlr\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.9g\t%.9g\t%.9g\n", e.epoch, e.train_loss,
                  e.val_map, e.lr);
    out += buf;
  }
  return out;
}

TrainResult Train(TxVModel model, const DataSplit& train, const DataSplit& val,
                  const TrainConfig& config) {
  config.Validate();
  if (train.pairs.size() < 2) throw ConfigError("training split needs at least 2 pairs");
  if (val.pairs.empty()) throw ConfigError("validation split is empty");

  Rng shuffle_rng(DeriveSeed(config.seed, 1));
  Rng dropout_rng(DeriveSeed(config.seed, 2));
  Optimizer optimizer(config.optimizer, model.ParameterCount());

  TrainResult result{model, {}, 0, -std::numeric_limits<double>::infinity()};
  double lr = config.lr;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = MakeBatches(train.pairs, config.batch_size, shuffle_rng);
    if (batches.empty()) throw ConfigError("training split yields no batch of 2 distinct videos");
    double loss_sum = 0.0;
    for (const auto& indices : batches) {
      Batch batch;
      for (std::size_t i : indices) {
        batch.caption_ids.push_back(train.pairs.pairs[i].caption_id);
        batch.video_ids.push_back(train.pairs.pairs[i].video_id);
      }
      const LossAndGrad step = TotalLoss(model, train.text, train.video, batch, config.margin,
                                         {config.dropout, &dropout_rng});
      loss_sum += step.loss;
      optimizer.Step(model, step.gradient, lr);
    }
    const double val_map = EvaluateSplit(model, val).mean_ap;
    result.history.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(batches.size()), val_map, lr});
    if (val_map > result.best_val_map) {
      result.best_val_map = val_map;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    lr *= 1.0 - config.lr_decay_per_epoch;
    if (since_best >= config.plateau_patience) {
      lr *= config.plateau_factor;
      since_best = 0;
    }
  }
  nlohmann::ordered_json meta;
  meta["optimizer"] = OptimizerName(config.optimizer);
  meta["lr"] = config.lr;
  meta["margin"] = config.margin;
  meta["dropout"] = config.dropout;
  meta["batch_size"] = config.batch_size;
  meta["max_epochs"] = config.max_epochs;
  meta["seed"] = config.seed;
  meta["best_epoch"] = result.best_epoch;
  meta["best_val_map"] = result.best_val_map;
  result.model.set_training_metadata(meta.dump());
  return result;
}

std::vector<TrainConfig> EnsembleConfig::Members() const {
  if (!(lr_scale > 0.0)) throw ConfigError("ensemble.lr_scale must be positive");
  std::vector<TrainConfig> out;
  std::size_t index = 0;
  for (OptimizerKind kind : {OptimizerKind::kAdam, OptimizerKind::kRmsprop}) {
    for (double lr : kLearningRates) {
      TrainConfig c = base;
      c.optimizer = kind;
      c.lr = lr * lr_scale;
      c.seed = base.seed + index++;
      out.push_back(c);
    }
  }
  return out;
}

std::string EnsembleConfig::MemberTag(std::size_t index) {
  const OptimizerKind kind = index < 3 ? OptimizerKind::kAdam : OptimizerKind::kRmsprop;
  return std::string(OptimizerName(kind)) + "_lr" + LrTag(kLearningRates[index % 3]);
}

std::vector<EnsembleMember> TrainEnsemble(const ModelConfig& model_config,
                                          const DataSplit& train,
                                          const DataSplit& val,
                                          const EnsembleConfig& ensemble,
                                          std::size_t workers) {
  const auto configs = ensemble.Members();
  std::vector<EnsembleMember> members(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    members[i].tag = EnsembleConfig::MemberTag(i);
    members[i].config = configs[i];
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < members.size(); i = next++) {
      try {
        TxVModel model = TxVModel::Init(model_config, members[i].config.seed);
        members[i].result = Train(std::move(model), train, val, members[i].config);
      } catch (const Error& e) {
        members[i].error = e.what();
        members[i].error_category = e.category();
      } catch (const std::exception& e) {
        members[i].error = e.what();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, members.size());
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  return members;
}

}  // namespace txv
