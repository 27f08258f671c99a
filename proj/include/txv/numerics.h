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

#ifndef TXV_NUMERICS_H_
#define TXV_NUMERICS_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace txv {

class Rng;

// Dense vector of doubles. Construction from values rejects NaN/Inf.
class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit Vec64(std::vector<double> values);
  Vec64(std::initializer_list<double> values)
      : Vec64(std::vector<double>(values)) {}

  std::size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  const std::vector<double>& vector() const { return values_; }

  friend bool operator==(const Vec64&, const Vec64&) = default;

 private:
  std::vector<double> values_;
};

// Row-major dense matrix. Zero-row matrices are allowed (an empty background
// set), everything else requires positive shape.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);
  Mat64(std::initializer_list<std::initializer_list<double>> rows);

  static Mat64 Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::span<double> mutable_row(std::size_t r) {
    return std::span<double>(values_).subspan(r * cols_, cols_);
  }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Softmax direction. kColumns normalizes down each column (PyTorch dim=0),
// kRows normalizes across each row (dim=1).
enum class Axis { kColumns = 0, kRows = 1 };

// Norm product below which cosine similarity is defined as 0.
inline constexpr double kCosineDegenerateNorm = 1e-12;

double Dot(std::span<const double> a, std::span<const double> b);

double CosineSimilarity(std::span<const double> a, std::span<const double> b);
double CosineSimilarity(const Vec64& a, const Vec64& b);

// Accumulates upstream * d cos(a,b) / da into `grad_a` and likewise for b.
// Zero in the degenerate case.
void CosineSimilarityBackward(std::span<const double> a,
                              std::span<const double> b, double upstream,
                              std::span<double> grad_a,
                              std::span<double> grad_b);

Mat64 Softmax(const Mat64& m, Axis axis);

// Inverted-dropout mask: each entry is 0 with probability p, else 1/(1-p).
Vec64 DropoutMask(std::size_t dim, double p, Rng& rng);

// State retained by AffineReluForward for the backward pass. Holds a pointer
// to the weights, which must outlive the cache.
struct AffineReluCache {
  const Mat64* weights = nullptr;
  std::vector<double> input;         // x, unmasked
  std::optional<Vec64> mask;
  std::vector<double> masked_input;  // x ⊙ mask
  std::vector<double> pre_activation;
};

struct AffineReluGrads {
  Mat64 weights;
  Vec64 bias;
  Vec64 input;
};

// y = ReLU(W (x ⊙ mask) + b).
Vec64 AffineReluForward(const Mat64& weights, const Vec64& bias,
                        const Vec64& x, const Vec64* drop_mask,
                        AffineReluCache* cache);

// Span variant writing into `y`; `cache` may be null.
void AffineReluForward(const Mat64& weights, std::span<const double> bias,
                       std::span<const double> x, const Vec64* drop_mask,
                       std::span<double> y, AffineReluCache* cache);

AffineReluGrads AffineReluBackward(const AffineReluCache& cache,
                                   const Vec64& dy);

// Accumulating form: adds into grad_weights/grad_bias, and into grad_input
// when it is non-empty.
void AffineReluBackwardAccumulate(const AffineReluCache& cache,
                                  std::span<const double> dy,
                                  Mat64& grad_weights,
                                  std::span<double> grad_bias,
                                  std::span<double> grad_input);

// Loss callback for GradCheck: returns the loss at `params` and, when `grad`
// is non-null, writes the analytic gradient into it.
using LossFn = std::function<double(const Vec64& params, Vec64* grad)>;

inline constexpr double kGradCheckStep = 1e-6;
inline constexpr double kGradCheckTolerance = 1e-4;

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
// with central differences of step h.
double GradCheck(const LossFn& loss_fn, const Vec64& params,
                 double h = kGradCheckStep);

}  // namespace txv

#endif  // TXV_NUMERICS_H_
