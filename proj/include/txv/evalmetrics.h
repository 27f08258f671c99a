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

#ifndef TXV_EVALMETRICS_H_
#define TXV_EVALMETRICS_H_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "txv/featurebank.h"
#include "txv/retrieval.h"

namespace txv {

// query id -> relevant item ids.
using GroundTruth = std::map<std::string, std::set<std::string>>;
using RelevantSet = std::set<std::string>;

GroundTruth GroundTruthFromPairs(const PairList& pairs);

// |relevant ∩ top-k| / |relevant|. Throws EvalError on k == 0 or an empty
// relevant set.
double RecallAtK(const RankedList& list, const RelevantSet& relevant,
                 std::size_t k);

// Rank of the best-placed relevant item; list size + 1 when none is listed.
std::size_t BestRelevantRank(const RankedList& list, const RelevantSet& relevant);

double ReciprocalRank(const RankedList& list, const RelevantSet& relevant);

// (1/|relevant|) * sum over relevant hit positions r of hits-so-far / r.
// Relevant items absent from the list contribute zero.
double AveragePrecision(const RankedList& list, const RelevantSet& relevant);

// Median of BestRelevantRank over the lists; mean of the central pair for an
// even count.
double MedianRank(const std::vector<RankedList>& lists, const GroundTruth& gt);

struct QueryMetrics {
  std::string query_id;
  std::vector<double> recall;  // aligned with MetricReport::ks
  std::size_t best_rank = 0;
  double average_precision = 0.0;
  double reciprocal_rank = 0.0;
};

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<QueryMetrics> queries;  // sorted by query id
  std::vector<double> recall;         // mean R@k, aligned with ks
  double median_rank = 0.0;
  double mean_ap = 0.0;
  double mrr = 0.0;

  std::size_t query_count() const { return queries.size(); }
  double RecallAt(std::size_t k) const;  // EvalError if k not evaluated

  // Per-query rows then an "ALL" row.
  std::string ToTsv() const;
  std::string ToJson() const;
};

// Evaluates every query of `gt`. Throws EvalError listing queries without a
// ranking list, or lists without ground truth.
MetricReport Evaluate(const std::vector<RankedList>& lists,
                      const GroundTruth& gt,
                      const std::vector<std::size_t>& ks = {1, 5, 10});

// Ranks the split's gallery for each of its captions and evaluates.
MetricReport EvaluateSplit(const TxVModel& model, const DataSplit& split,
                           const std::vector<std::size_t>& ks = {1, 5, 10},
                           std::size_t threads = 1);

}  // namespace txv

#endif  // TXV_EVALMETRICS_H_
