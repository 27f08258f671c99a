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

// Reference implementations used only by tests. They are written directly
// from the defining formulas, in long double where precision matters, and
// share no code with the library paths they check.

#ifndef TXV_TESTS_ORACLES_H_
#define TXV_TESTS_ORACLES_H_

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace txv::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix RandomMatrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen,
                           double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = dist(gen);
  return m;
}

inline long double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  const long double n = std::sqrt(na) * std::sqrt(nb);
  return n < 1e-12L ? 0.0L : dot / n;
}

// Softmax along columns (axis 0) or rows (axis 1).
inline std::vector<std::vector<long double>> Softmax(const Matrix& z, int axis) {
  const std::size_t rows = z.size(), cols = z[0].size();
  std::vector<std::vector<long double>> out(rows, std::vector<long double>(cols));
  if (axis == 1) {
    for (std::size_t r = 0; r < rows; ++r) {
      long double sum = 0;
      for (std::size_t c = 0; c < cols; ++c) sum += std::exp(static_cast<long double>(z[r][c]));
      for (std::size_t c = 0; c < cols; ++c) out[r][c] = std::exp(static_cast<long double>(z[r][c])) / sum;
    }
  } else {
    for (std::size_t c = 0; c < cols; ++c) {
      long double sum = 0;
      for (std::size_t r = 0; r < rows; ++r) sum += std::exp(static_cast<long double>(z[r][c]));
      for (std::size_t r = 0; r < rows; ++r) out[r][c] = std::exp(static_cast<long double>(z[r][c])) / sum;
    }
  }
  return out;
}

// Row 0 of softmax(Z, dim=0) ⊙ softmax(Z, dim=1) with Z = [y; X].
inline std::vector<long double> DualSoftmaxRow0(const std::vector<double>& y, const Matrix& x) {
  Matrix z{y};
  z.insert(z.end(), x.begin(), x.end());
  const auto col = Softmax(z, 0);
  const auto row = Softmax(z, 1);
  std::vector<long double> out(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) out[j] = col[0][j] * row[0][j];
  return out;
}

// Exhaustive argmax over j != i of s[i][j] (rows) and over i != j of s[i][j]
// (columns); ties resolve to the smallest index.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> HardestNegatives(
    const Matrix& s) {
  const std::size_t q = s.size();
  std::vector<std::size_t> rows(q), cols(q);
  for (std::size_t i = 0; i < q; ++i) {
    double best = -INFINITY;
    for (std::size_t j = 0; j < q; ++j) {
      if (j == i) continue;
      if (s[i][j] > best) {
        best = s[i][j];
        rows[i] = j;
      }
    }
  }
  for (std::size_t j = 0; j < q; ++j) {
    double best = -INFINITY;
    for (std::size_t i = 0; i < q; ++i) {
      if (i == j) continue;
      if (s[i][j] > best) {
        best = s[i][j];
        cols[j] = i;
      }
    }
  }
  return {rows, cols};
}

// Mean over pairs of the two hinge terms with hardest negatives.
inline long double MarginLoss(const Matrix& s, double margin) {
  const auto [rows, cols] = HardestNegatives(s);
  long double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    total += std::max(0.0L, static_cast<long double>(margin) + s[i][rows[i]] - s[i][i]);
    total += std::max(0.0L, static_cast<long double>(margin) + s[cols[i]][i] - s[i][i]);
  }
  return total / static_cast<long double>(s.size());
}

// Central difference gradient of f at x, step h.
inline std::vector<double> CentralDifference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double RelError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace txv::oracle

#endif  // TXV_TESTS_ORACLES_H_
