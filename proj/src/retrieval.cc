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

#include "txv/retrieval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "txv/errors.h"
#include "txv/rng.h"

namespace txv {

std::vector<std::string> RankedList::item_ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.item_id);
  return out;
}

RankedList Rank(const std::string& query_id,
                const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.empty()) throw EmptyInputError("rank: query '" + query_id + "' has no scores");
  for (const auto& [id, s] : scores) {
    if (std::isnan(s)) {
      throw NumericalError("rank: NaN score for item '" + id + "' (query '" + query_id + "')");
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].second != scores[b].second) return scores[a].second > scores[b].second;
    return scores[a].first < scores[b].first;
  });
  RankedList list{query_id, {}, false};
  list.entries.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    list.entries.push_back({r + 1, scores[order[r]].first, scores[order[r]].second});
  }
  return list;
}

RankedList Rank(const std::string& query_id,
                const std::vector<std::string>& item_ids,
                std::span<const double> scores) {
  if (item_ids.size() != scores.size()) {
    throw DimensionError("rank: " + std::to_string(item_ids.size()) + " ids but " +
                         std::to_string(scores.size()) + " scores");
  }
  std::vector<std::pair<std::string, double>> pairs;
  pairs.reserve(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) pairs.emplace_back(item_ids[i], scores[i]);
  return Rank(query_id, pairs);
}

BackgroundSet BuildBackground(const TxVModel& model, const BankSet& text,
                              const std::vector<std::string>& background_ids,
                              const BankSet& video,
                              const std::vector<std::string>& video_ids,
                              std::size_t threads) {
  if (video_ids.empty()) throw EmptyInputError("background: empty video gallery");
  BackgroundSet bg{background_ids, video_ids, Mat64(0, video_ids.size())};
  if (!background_ids.empty()) {
    bg.scores = SimilarityMatrix(model, text, background_ids, video, video_ids, threads);
  }
  return bg;
}

Vec64 DsInfRescore(std::span<const double> y, const BackgroundSet& background,
                   double temperature) {
  const Mat64& x = background.scores;
  const std::size_t d = y.size();
  if (d == 0) throw EmptyInputError("dsinf: empty score vector");
  if (d != x.cols() || d != background.video_ids.size()) {
    throw DimensionError("dsinf: score vector has " + std::to_string(d) +
                         " entries, background has " + std::to_string(x.cols()) +
                         " columns");
  }
  if (!(temperature > 0.0)) throw ConfigError("dsinf: temperature must be positive");
  const double inv_t = 1.0 / temperature;

  // Row softmax of row 0 (dim=1).
  double row_max = y[0] * inv_t;
  for (double v : y) row_max = std::max(row_max, v * inv_t);
  std::vector<double> row(d);
  double row_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    row[j] = std::exp(y[j] * inv_t - row_max);
    row_sum += row[j];
  }

  Vec64 out(d);
  for (std::size_t j = 0; j < d; ++j) {
    // Column softmax entry for row 0 (dim=0), rows summed top to bottom.
    const double top = y[j] * inv_t;
    double col_max = top;
    for (std::size_t c = 0; c < x.rows(); ++c) col_max = std::max(col_max, x(c, j) * inv_t);
    double col_sum = std::exp(top - col_max);
    for (std::size_t c = 0; c < x.rows(); ++c) col_sum += std::exp(x(c, j) * inv_t - col_max);
    const double col = std::exp(top - col_max) / col_sum;
    out[j] = col * (row[j] / row_sum);
  }
  return out;
}

Mat64 DsInfRescoreMatrix(const Mat64& scores, const BackgroundSet& background,
                         double temperature) {
  Mat64 out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const Vec64 r = DsInfRescore(scores.row(i), background, temperature);
    std::copy(r.values().begin(), r.values().end(), out.mutable_row(i).begin());
  }
  return out;
}

RankedList FuseRanks(const std::vector<RankedList>& lists) {
  if (lists.empty()) throw FusionError("fuse: no ranking lists given");
  const std::set<std::string> universe = [&] {
    const auto ids = lists.front().item_ids();
    return std::set<std::string>(ids.begin(), ids.end());
  }();
  std::map<std::string, double> rank_sum;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto ids = lists[i].item_ids();
    const std::set<std::string> mine(ids.begin(), ids.end());
    if (mine != universe || ids.size() != mine.size() ||
        lists[i].query_id != lists.front().query_id) {
      throw FusionError("fuse: list " + std::to_string(i) + " (query '" +
                        lists[i].query_id + "') has a different item universe");
    }
    for (const auto& e : lists[i].entries) rank_sum[e.item_id] += static_cast<double>(e.rank);
  }
  const double n = static_cast<double>(lists.size());
  std::vector<std::pair<std::string, double>> mean;
  for (const auto& [id, sum] : rank_sum) mean.emplace_back(id, sum / n);
  std::stable_sort(mean.begin(), mean.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  RankedList out{lists.front().query_id, {}, true};
  for (std::size_t r = 0; r < mean.size(); ++r) {
    out.entries.push_back({r + 1, mean[r].first, mean[r].second});
  }
  return out;
}

std::vector<std::string> SampleIds(const std::vector<std::string>& ids,
                                   std::size_t n, std::uint64_t seed) {
  if (n >= ids.size()) return ids;
  std::vector<std::size_t> idx(ids.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.Shuffle(std::span(idx));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(ids[i]);
  return out;
}

std::vector<std::string> QueryIds(const PairList& pairs) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : pairs.pairs) {
    if (seen.insert(p.caption_id).second) out.push_back(p.caption_id);
  }
  return out;
}

std::vector<std::string> GalleryIds(const BankSet& video) {
  if (video.empty()) throw EmptyInputError("no video banks");
  return video.banks().front().ids();
}

std::vector<RankedList> RankMatrix(const std::vector<std::string>& query_ids,
                                   const std::vector<std::string>& item_ids,
                                   const Mat64& scores) {
  if (scores.rows() != query_ids.size() || scores.cols() != item_ids.size()) {
    throw DimensionError("rank matrix: shape mismatch");
  }
  std::vector<RankedList> out;
  out.reserve(query_ids.size());
  for (std::size_t i = 0; i < query_ids.size(); ++i) {
    out.push_back(Rank(query_ids[i], item_ids, scores.row(i)));
  }
  return out;
}

std::string FormatRankings(const std::vector<RankedList>& lists) {
  std::string out;
  char buf[64];
  for (const auto& list : lists) {
    for (const auto& e : list.entries) {
      std::snprintf(buf, sizeof(buf), "%.9g", e.score);
      out += list.query_id + '\t' + std::to_string(e.rank) + '\t' + e.item_id + '\t' + buf + '\n';
    }
  }
  return out;
}

void WriteRankings(const std::vector<RankedList>& lists,
                   const std::filesystem::path& path) {
  const std::string text = FormatRankings(lists);
  WriteFileBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                 text.size()));
}

std::vector<RankedList> ReadRankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<RankedList> lists;
  std::set<std::string> finished;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string query, rank_text, item, score_text;
    if (!std::getline(fields, query, '\t') || !std::getline(fields, rank_text, '\t') ||
        !std::getline(fields, item, '\t') || !std::getline(fields, score_text, '\t')) {
      throw FormatError(path.string() + ": expected query TAB rank TAB item TAB score",
                        line_no);
    }
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(rank_text);
      score = std::stod(score_text);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad rank or score", line_no);
    }
    if (lists.empty() || lists.back().query_id != query) {
      if (!lists.empty()) finished.insert(lists.back().query_id);
      if (finished.contains(query)) {
        throw FormatError(path.string() + ": rows of query '" + query + "' are not grouped",
                          line_no);
      }
      lists.push_back({query, {}, false});
    }
    auto& list = lists.back();
    if (rank != list.entries.size() + 1) {
      throw FormatError(path.string() + ": ranks of query '" + query +
                            "' must be consecutive from 1",
                        line_no);
    }
    list.entries.push_back({rank, item, score});
  }
  // A list whose scores increase with rank came from rank fusion.
  for (auto& list : lists) {
    if (list.entries.size() > 1 &&
        list.entries.back().score > list.entries.front().score) {
      list.ascending = true;
    }
  }
  return lists;
}

void SaveBackground(const BackgroundSet& background,
                    const std::filesystem::path& path) {
  FeatureBank bank("background", background.video_ids.size());
  for (std::size_t c = 0; c < background.size(); ++c) {
    const auto row = background.scores.row(c);
    bank.Add(background.query_ids[c], Vec64(std::vector<double>(row.begin(), row.end())));
  }
  SaveBank(bank, path);
  std::string sidecar;
  for (const auto& id : background.video_ids) sidecar += id + '\n';
  WriteFileBytes(path.string() + ".videos.tsv",
                 std::span(reinterpret_cast<const std::uint8_t*>(sidecar.data()),
                           sidecar.size()));
}

BackgroundSet LoadBackground(const std::filesystem::path& path) {
  const FeatureBank bank = LoadBank(path, "background");
  const std::filesystem::path sidecar = path.string() + ".videos.tsv";
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot open '" + sidecar.string() + "' for reading");
  BackgroundSet bg;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) bg.video_ids.push_back(line);
  }
  if (bg.video_ids.size() != bank.dim()) {
    throw FormatError(sidecar.string() + ": " + std::to_string(bg.video_ids.size()) +
                          " video ids for a background matrix of width " +
                          std::to_string(bank.dim()),
                      0);
  }
  bg.query_ids = bank.ids();
  std::vector<double> values;
  for (std::size_t c = 0; c < bank.size(); ++c) {
    const auto row = bank.row(c).values();
    values.insert(values.end(), row.begin(), row.end());
  }
  bg.scores = Mat64(bank.size(), bank.dim(), std::move(values));
  return bg;
}

}  // namespace txv
