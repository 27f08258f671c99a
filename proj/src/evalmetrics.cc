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

#include "txv/evalmetrics.h"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "txv/errors.h"

namespace txv {
namespace {

void RequireRelevant(const RelevantSet& relevant, const std::string& query) {
  if (relevant.empty()) {
    throw EvalError("query '" + query + "' has no relevant items");
  }
}

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

GroundTruth GroundTruthFromPairs(const PairList& pairs) {
  GroundTruth gt;
  for (const auto& p : pairs.pairs) gt[p.caption_id].insert(p.video_id);
  return gt;
}

double RecallAtK(const RankedList& list, const RelevantSet& relevant,
                 std::size_t k) {
  if (k == 0) throw EvalError("recall@k: k must be >= 1");
  RequireRelevant(relevant, list.query_id);
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, list.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant.contains(list.entries[r].item_id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

std::size_t BestRelevantRank(const RankedList& list, const RelevantSet& relevant) {
  RequireRelevant(relevant, list.query_id);
  for (const auto& e : list.entries) {
    if (relevant.contains(e.item_id)) return e.rank;
  }
  return list.size() + 1;
}

double ReciprocalRank(const RankedList& list, const RelevantSet& relevant) {
  const std::size_t best = BestRelevantRank(list, relevant);
  return best > list.size() ? 0.0 : 1.0 / static_cast<double>(best);
}

double AveragePrecision(const RankedList& list, const RelevantSet& relevant) {
  RequireRelevant(relevant, list.query_id);
  double sum = 0.0;
  std::size_t hits = 0;
  for (const auto& e : list.entries) {
    if (relevant.contains(e.item_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(e.rank);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double MedianRank(const std::vector<RankedList>& lists, const GroundTruth& gt) {
  if (lists.empty()) throw EvalError("median rank: no queries");
  std::vector<std::size_t> best;
  for (const auto& list : lists) {
    const auto it = gt.find(list.query_id);
    if (it == gt.end()) throw EvalError("no ground truth for query '" + list.query_id + "'");
    best.push_back(BestRelevantRank(list, it->second));
  }
  std::sort(best.begin(), best.end());
  const std::size_t n = best.size();
  if (n % 2 == 1) return static_cast<double>(best[n / 2]);
  return 0.5 * static_cast<double>(best[n / 2 - 1] + best[n / 2]);
}

double MetricReport::RecallAt(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw EvalError("R@" + std::to_string(k) + " was not evaluated");
}

MetricReport Evaluate(const std::vector<RankedList>& lists,
                      const GroundTruth& gt,
                      const std::vector<std::size_t>& ks) {
  std::map<std::string, const RankedList*> by_query;
  for (const auto& list : lists) {
    if (!by_query.emplace(list.query_id, &list).second) {
      throw EvalError("duplicate ranking list for query '" + list.query_id + "'");
    }
  }
  std::string uncovered, unjudged;
  for (const auto& [query, relevant] : gt) {
    if (!by_query.contains(query)) uncovered += (uncovered.empty() ? "" : ",") + query;
  }
  for (const auto& [query, list] : by_query) {
    if (!gt.contains(query)) unjudged += (unjudged.empty() ? "" : ",") + query;
  }
  if (!uncovered.empty()) throw EvalError("queries without a ranking list: " + uncovered);
  if (!unjudged.empty()) throw EvalError("ranking lists without ground truth: " + unjudged);
  if (gt.empty()) throw EvalError("no queries to evaluate");

  MetricReport report;
  report.ks = ks;
  report.recall.assign(ks.size(), 0.0);
  std::vector<RankedList> ordered;
  for (const auto& [query, relevant] : gt) {
    const RankedList& list = *by_query.at(query);
    QueryMetrics q;
    q.query_id = query;
    for (std::size_t k : ks) q.recall.push_back(RecallAtK(list, relevant, k));
    q.best_rank = BestRelevantRank(list, relevant);
    q.average_precision = AveragePrecision(list, relevant);
    q.reciprocal_rank = ReciprocalRank(list, relevant);
    report.queries.push_back(std::move(q));
    ordered.push_back(list);
  }
  // Queries are visited in sorted id order, so aggregation is order-independent.
  const double n = static_cast<double>(report.queries.size());
  for (const auto& q : report.queries) {
    for (std::size_t i = 0; i < ks.size(); ++i) report.recall[i] += q.recall[i];
    report.mean_ap += q.average_precision;
    report.mrr += q.reciprocal_rank;
  }
  for (double& r : report.recall) r /= n;
  report.mean_ap /= n;
  report.mrr /= n;
  report.median_rank = MedianRank(ordered, gt);
  return report;
}

MetricReport EvaluateSplit(const TxVModel& model, const DataSplit& split,
                           const std::vector<std::size_t>& ks,
                           std::size_t threads) {
  const auto queries = QueryIds(split.pairs);
  const auto gallery = GalleryIds(split.video);
  const Mat64 scores =
      SimilarityMatrix(model, split.text, queries, split.video, gallery, threads);
  return Evaluate(RankMatrix(queries, gallery, scores), GroundTruthFromPairs(split.pairs),
                  ks);
}

std::string MetricReport::ToTsv() const {
  std::string out = "# recall denominator: |relevant|; MedR uses the best relevant rank\n";
  out += "query_id";
  for (std::size_t k : ks) out += "\tR@" + std::to_string(k);
  out += "\tMedR\tAP\tRR\n";
  for (const auto& q : queries) {
    out += q.query_id;
    for (double r : q.recall) out += "\t" + Num(r);
    out += "\t" + std::to_string(q.best_rank) + "\t" + Num(q.average_precision) + "\t" +
           Num(q.reciprocal_rank) + "\n";
  }
  out += "ALL";
  for (double r : recall) out += "\t" + Num(r);
  out += "\t" + Num(median_rank) + "\t" + Num(mean_ap) + "\t" + Num(mrr) + "\n";
  return out;
}

std::string MetricReport::ToJson() const {
  nlohmann::ordered_json j;
  j["query_count"] = query_count();
  j["recall_denominator"] = "relevant";
  nlohmann::ordered_json agg;
  for (std::size_t i = 0; i < ks.size(); ++i) agg["R@" + std::to_string(ks[i])] = recall[i];
  agg["MedR"] = median_rank;
  agg["mAP"] = mean_ap;
  agg["MRR"] = mrr;
  j["all"] = agg;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& q : queries) {
    nlohmann::ordered_json row;
    row["query_id"] = q.query_id;
    for (std::size_t i = 0; i < ks.size(); ++i) row["R@" + std::to_string(ks[i])] = q.recall[i];
    row["best_rank"] = q.best_rank;
    row["AP"] = q.average_precision;
    row["RR"] = q.reciprocal_rank;
    per.push_back(row);
  }
  j["queries"] = per;
  return j.dump(2) + "\n";
}

}  // namespace txv
