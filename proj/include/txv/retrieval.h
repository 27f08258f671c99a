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

#ifndef TXV_RETRIEVAL_H_
#define TXV_RETRIEVAL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "txv/featurebank.h"
#include "txv/model.h"
#include "txv/numerics.h"

namespace txv {

struct RankEntry {
  std::size_t rank = 0;  // 1-based
  std::string item_id;
  double score = 0.0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

// Ranked result list for one query. Normally scores are non-increasing with
// rank; fused lists carry mean ranks instead and set `ascending`.
struct RankedList {
  std::string query_id;
  std::vector<RankEntry> entries;
  bool ascending = false;

  std::size_t size() const { return entries.size(); }
  std::vector<std::string> item_ids() const;

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

// Sorts by score descending, ties by ascending item id; ranks 1..D.
// Throws EmptyInputError on no scores, NumericalError naming a NaN item.
RankedList Rank(const std::string& query_id,
                const std::vector<std::pair<std::string, double>>& scores);
RankedList Rank(const std::string& query_id,
                const std::vector<std::string>& item_ids,
                std::span<const double> scores);

// Similarity matrix X* of C fixed background queries against a video
// gallery, with the gallery column order it was computed for.
struct BackgroundSet {
  std::vector<std::string> query_ids;
  std::vector<std::string> video_ids;
  Mat64 scores;  // C x D

  std::size_t size() const { return query_ids.size(); }
};

BackgroundSet BuildBackground(const TxVModel& model, const BankSet& text,
                              const std::vector<std::string>& background_ids,
                              const BankSet& video,
                              const std::vector<std::string>& video_ids,
                              std::size_t threads = 1);

// Dual-softmax inference rescoring. Stacks y above X* into Z, takes the
// column-wise softmax (dim=0) and the row-wise softmax (dim=1), multiplies
// them elementwise and returns row 0. Scores are divided by `temperature`
// first (1.0 leaves them unchanged). Throws DimensionError.
Vec64 DsInfRescore(std::span<const double> y, const BackgroundSet& background,
                   double temperature = 1.0);

// Rescores every row of a Q x D similarity matrix.
Mat64 DsInfRescoreMatrix(const Mat64& scores, const BackgroundSet& background,
                         double temperature = 1.0);

// Late fusion by mean rank; ascending mean rank, ties by item id. Throws
// FusionError naming the list whose item set differs from the first.
RankedList FuseRanks(const std::vector<RankedList>& lists);

// Seeded choice of n distinct ids (all of them when n >= size), returned in
// their original order.
std::vector<std::string> SampleIds(const std::vector<std::string>& ids,
                                   std::size_t n, std::uint64_t seed);

// Unique caption ids of a pair list, first-seen order.
std::vector<std::string> QueryIds(const PairList& pairs);

// Gallery of a split: ids of its first video bank, in bank order.
std::vector<std::string> GalleryIds(const BankSet& video);

std::vector<RankedList> RankMatrix(const std::vector<std::string>& query_ids,
                                   const std::vector<std::string>& item_ids,
                                   const Mat64& scores);

// Ranking TSV: query_id TAB rank TAB item_id TAB score (9 significant digits).
std::string FormatRankings(const std::vector<RankedList>& lists);
void WriteRankings(const std::vector<RankedList>& lists,
                   const std::filesystem::path& path);
std::vector<RankedList> ReadRankings(const std::filesystem::path& path);

// Cache as a .txvf bank (rows = background queries) plus a sidecar TSV
// `<path>.videos.tsv` holding the column order.
void SaveBackground(const BackgroundSet& background,
                    const std::filesystem::path& path);
BackgroundSet LoadBackground(const std::filesystem::path& path);

}  // namespace txv

#endif  // TXV_RETRIEVAL_H_
