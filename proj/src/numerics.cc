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

#include "txv/numerics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "txv/errors.h"
#include "txv/rng.h"

namespace txv {
namespace {

void CheckFinite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError(std::string(what) + ": non-finite entry at index " +
                           std::to_string(i));
    }
  }
}

std::string Shape(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

Vec64::Vec64(std::vector<double> values) : values_(std::move(values)) {
  CheckFinite(values_, "Vec64");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("Mat64: " + std::to_string(values_.size()) +
                         " values for shape " + Shape(rows_, cols_));
  }
  CheckFinite(values_, "Mat64");
}

Mat64::Mat64(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) throw DimensionError("Mat64: ragged rows");
    values_.insert(values_.end(), row.begin(), row.end());
  }
  CheckFinite(values_, "Mat64");
}

Mat64 Mat64::Identity(std::size_t n) {
  Mat64 m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: dims " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  const double norms = std::sqrt(Dot(a, a)) * std::sqrt(Dot(b, b));
  if (norms < kCosineDegenerateNorm) return 0.0;
  return Dot(a, b) / norms;
}

double CosineSimilarity(const Vec64& a, const Vec64& b) {
  return CosineSimilarity(a.values(), b.values());
}

void CosineSimilarityBackward(std::span<const double> a,
                              std::span<const double> b, double upstream,
                              std::span<double> grad_a,
                              std::span<double> grad_b) {
  if (a.size() != b.size()) throw DimensionError("cosine backward: dims");
  if (upstream == 0.0) return;
  const double norm_a = std::sqrt(Dot(a, a));
  const double norm_b = std::sqrt(Dot(b, b));
  if (norm_a * norm_b < kCosineDegenerateNorm) return;
  const double inv = 1.0 / (norm_a * norm_b);
  const double cos = Dot(a, b) * inv;
  const double ka = cos / (norm_a * norm_a);
  const double kb = cos / (norm_b * norm_b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!grad_a.empty()) grad_a[i] += upstream * (b[i] * inv - ka * a[i]);
    if (!grad_b.empty()) grad_b[i] += upstream * (a[i] * inv - kb * b[i]);
  }
}

Mat64 Softmax(const Mat64& m, Axis axis) {
  if (m.empty()) throw EmptyInputError("softmax: empty matrix");
  Mat64 out(m.rows(), m.cols());
  if (axis == Axis::kRows) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto in = m.row(r);
      const double hi = *std::max_element(in.begin(), in.end());
      auto dst = out.mutable_row(r);
      double sum = 0.0;
      for (std::size_t c = 0; c < in.size(); ++c) {
        dst[c] = std::exp(in[c] - hi);
        sum += dst[c];
      }
      for (double& v : dst) v /= sum;
    }
  } else {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double hi = m(0, c);
      for (std::size_t r = 1; r < m.rows(); ++r) hi = std::max(hi, m(r, c));
      double sum = 0.0;
      for (std::size_t r = 0; r < m.rows(); ++r) {
        out(r, c) = std::exp(m(r, c) - hi);
        sum += out(r, c);
      }
      for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) /= sum;
    }
  }
  return out;
}

Vec64 DropoutMask(std::size_t dim, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  const double keep = 1.0 / (1.0 - p);
  Vec64 mask(dim, keep);
  if (p == 0.0) return mask;
  for (std::size_t i = 0; i < dim; ++i) {
    if (rng.Uniform() < p) mask[i] = 0.0;
  }
  return mask;
}

void AffineReluForward(const Mat64& weights, std::span<const double> bias,
                       std::span<const double> x, const Vec64* drop_mask,
                       std::span<double> y, AffineReluCache* cache) {
  if (weights.cols() != x.size() || bias.size() != weights.rows() ||
      y.size() != weights.rows()) {
    throw DimensionError("affine_relu_forward: W " +
                         Shape(weights.rows(), weights.cols()) + ", b " +
                         std::to_string(bias.size()) + ", x " +
                         std::to_string(x.size()));
  }
  if (drop_mask != nullptr && drop_mask->dim() != x.size()) {
    throw DimensionError("affine_relu_forward: mask dim " +
                         std::to_string(drop_mask->dim()) + " vs x dim " +
                         std::to_string(x.size()));
  }
  std::vector<double> masked(x.begin(), x.end());
  if (drop_mask != nullptr) {
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= (*drop_mask)[i];
  }
  std::vector<double> pre(weights.rows());
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    pre[r] = Dot(weights.row(r), masked) + bias[r];
    y[r] = pre[r] > 0.0 ? pre[r] : 0.0;
  }
  if (cache != nullptr) {
    cache->weights = &weights;
    cache->input.assign(x.begin(), x.end());
    cache->mask = drop_mask != nullptr ? std::optional<Vec64>(*drop_mask)
                                       : std::nullopt;
    cache->masked_input = std::move(masked);
    cache->pre_activation = std::move(pre);
  }
}

Vec64 AffineReluForward(const Mat64& weights, const Vec64& bias,
                        const Vec64& x, const Vec64* drop_mask,
                        AffineReluCache* cache) {
  Vec64 y(weights.rows());
  AffineReluForward(weights, bias.values(), x.values(), drop_mask,
                    y.mutable_values(), cache);
  return y;
}

void AffineReluBackwardAccumulate(const AffineReluCache& cache,
                                  std::span<const double> dy,
                                  Mat64& grad_weights,
                                  std::span<double> grad_bias,
                                  std::span<double> grad_input) {
  if (cache.weights == nullptr) {
    throw DimensionError("affine_relu_backward: empty cache");
  }
  const Mat64& w = *cache.weights;
  if (dy.size() != w.rows() || grad_weights.rows() != w.rows() ||
      grad_weights.cols() != w.cols() || grad_bias.size() != w.rows() ||
      (!grad_input.empty() && grad_input.size() != w.cols())) {
    throw DimensionError("affine_relu_backward: shape mismatch, dy dim " +
                         std::to_string(dy.size()) + " for W " +
                         Shape(w.rows(), w.cols()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    // ReLU subgradient at exactly 0 is 0.
    if (!(cache.pre_activation[r] > 0.0) || dy[r] == 0.0) continue;
    const double g = dy[r];
    grad_bias[r] += g;
    auto gw = grad_weights.mutable_row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) gw[c] += g * cache.masked_input[c];
    if (!grad_input.empty()) {
      const auto wr = w.row(r);
      for (std::size_t c = 0; c < w.cols(); ++c) {
        const double scale = cache.mask ? (*cache.mask)[c] : 1.0;
        grad_input[c] += g * wr[c] * scale;
      }
    }
  }
}

AffineReluGrads AffineReluBackward(const AffineReluCache& cache,
                                   const Vec64& dy) {
  if (cache.weights == nullptr) {
    throw DimensionError("affine_relu_backward: empty cache");
  }
  const Mat64& w = *cache.weights;
  AffineReluGrads grads{Mat64(w.rows(), w.cols()), Vec64(w.rows()),
                        Vec64(w.cols())};
  AffineReluBackwardAccumulate(cache, dy.values(), grads.weights,
                               grads.bias.mutable_values(),
                               grads.input.mutable_values());
  return grads;
}

double GradCheck(const LossFn& loss_fn, const Vec64& params, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw ConfigError("grad_check: h must lie in (0, 1e-3]");
  Vec64 analytic(params.dim());
  const double base = loss_fn(params, &analytic);
  if (!std::isfinite(base)) throw NumericalError("grad_check: non-finite loss");
  double worst = 0.0;
  Vec64 probe = params;
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = loss_fn(probe, nullptr);
    probe[i] = original - h;
    const double down = loss_fn(probe, nullptr);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("grad_check: non-finite loss at coordinate " +
                           std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace txv
