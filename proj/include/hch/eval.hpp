#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hch/data.hpp"
#include "hch/encode_index.hpp"

namespace hch {

/// relevant[q] holds the sorted database ids relevant to query q.
struct RelevanceJudgments {
  std::vector<std::vector<int>> relevant;

  int queries() const { return static_cast<int>(relevant.size()); }
  int l(int q) const { return static_cast<int>(relevant[q].size()); }
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// (1/l) sum_{r<=K} P(r) rel(r). `relevant` must be sorted.
double average_precision(std::span<const int> ranked, std::span<const int> relevant, int l);

double mean_average_precision(std::span<const double> aps);

/// One point per rank of `ranked`.
std::vector<PrPoint> pr_curve(std::span<const int> ranked, std::span<const int> relevant);

/// Mean over curves of the interpolated precision max_{recall >= t} P at
/// t = 0, 0.1, ..., 1.
std::vector<PrPoint> interpolate_11(const std::vector<std::vector<PrPoint>>& curves);

/// Mean precision of the radius-2 retrieval sets; empty sets count as 0.
double ham2(const BinaryCodes& queries, const HammingIndex& index,
            const RelevanceJudgments& judgments);

/// Database items sharing the query label. self_ids, when nonempty, gives
/// for each query the database id to leave out (-1 for none).
RelevanceJudgments class_ground_truth(std::span<const int> db_labels,
                                      std::span<const int> query_labels,
                                      std::span<const int> self_ids = {});

/// The k Euclidean nearest database columns of each query column (ties by
/// id), skipping self_ids as above.
RelevanceJudgments euclidean_ground_truth(const DataMatrix& db, const DataMatrix& queries,
                                          int k, std::span<const int> self_ids = {});

struct MetricsReport {
  double map = 0.0;
  std::vector<double> ap;  // per evaluated query
  double ham2 = 0.0;
  std::vector<PrPoint> pr_curve;  // 11-point aggregate
  int bits = 0;
  int skipped = 0;  // queries with no relevant item
};

/// Ranks the whole database (or the first top_k) by Hamming distance.
MetricsReport evaluate(const BinaryCodes& db, const BinaryCodes& queries,
                       const RelevanceJudgments& judgments,
                       std::optional<int> top_k = std::nullopt);

struct MetricsRecord {
  std::string dataset;
  int bits = 0;
  std::uint64_t seed = 0;
  double map = 0.0;
  double ham2 = 0.0;
  std::vector<std::pair<std::string, double>> params;  // config echo
  std::string status = "ok";
};

/// One JSON object per line, appended.
void append_metrics_jsonl(const MetricsRecord& record, const std::string& path);
std::string to_json_line(const MetricsRecord& record);
void write_pr_csv(const std::vector<PrPoint>& curve, const std::string& path);

}  // namespace hch
