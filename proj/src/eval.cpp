#include "hch/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "hch/error.hpp"

namespace hch {
namespace {

bool contains(std::span<const int> sorted, int id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

void check_self_ids(std::span<const int> self_ids, std::size_t queries) {
  if (!self_ids.empty() && self_ids.size() != queries) {
    fail(ErrorKind::kStructural, "self_ids must have one entry per query");
  }
}

}  // namespace

double average_precision(std::span<const int> ranked, std::span<const int> relevant, int l) {
  if (l < 1) fail(ErrorKind::kArgument, "average precision is undefined for a query with no relevant items");
  if (ranked.empty()) fail(ErrorKind::kArgument, "average precision needs a nonempty ranking");
  double sum = 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (contains(relevant, ranked[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / l;
}

double mean_average_precision(std::span<const double> aps) {
  if (aps.empty()) fail(ErrorKind::kArgument, "MAP over zero queries");
  return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

std::vector<PrPoint> pr_curve(std::span<const int> ranked, std::span<const int> relevant) {
  if (relevant.empty()) fail(ErrorKind::kArgument, "pr_curve: empty relevant set");
  std::vector<PrPoint> points;
  points.reserve(ranked.size());
  int hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (contains(relevant, ranked[r])) ++hits;
    points.push_back({static_cast<double>(hits) / relevant.size(),
                      static_cast<double>(hits) / static_cast<double>(r + 1)});
  }
  return points;
}

std::vector<PrPoint> interpolate_11(const std::vector<std::vector<PrPoint>>& curves) {
  std::vector<PrPoint> out(11);
  for (int t = 0; t <= 10; ++t) out[t].recall = t / 10.0;
  if (curves.empty()) return out;
  for (const auto& curve : curves) {
    // running max of precision from the tail
    std::vector<double> tail(curve.size() + 1, 0.0);
    for (std::size_t r = curve.size(); r-- > 0;) tail[r] = std::max(tail[r + 1], curve[r].precision);
    std::size_t r = 0;
    for (int t = 0; t <= 10; ++t) {
      const double level = t / 10.0;
      while (r < curve.size() && curve[r].recall < level - 1e-12) ++r;
      out[t].precision += tail[r];
    }
  }
  for (auto& p : out) p.precision /= static_cast<double>(curves.size());
  return out;
}

double ham2(const BinaryCodes& queries, const HammingIndex& index,
            const RelevanceJudgments& judgments) {
  if (judgments.queries() != queries.n) {
    fail(ErrorKind::kStructural, "ham2: judgments and query codes disagree in count");
  }
  if (queries.n == 0) return 0.0;
  double sum = 0.0;
  for (int q = 0; q < queries.n; ++q) {
    const std::vector<int> hits = query_radius(index, queries.code(q), 2);
    if (hits.empty()) continue;
    int good = 0;
    for (int id : hits) good += contains(judgments.relevant[q], id) ? 1 : 0;
    sum += static_cast<double>(good) / static_cast<double>(hits.size());
  }
  return sum / queries.n;
}

RelevanceJudgments class_ground_truth(std::span<const int> db_labels,
                                      std::span<const int> query_labels,
                                      std::span<const int> self_ids) {
  check_self_ids(self_ids, query_labels.size());
  RelevanceJudgments j;
  j.relevant.resize(query_labels.size());
  for (std::size_t q = 0; q < query_labels.size(); ++q) {
    const int skip = self_ids.empty() ? -1 : self_ids[q];
    for (std::size_t i = 0; i < db_labels.size(); ++i) {
      if (db_labels[i] == query_labels[q] && static_cast<int>(i) != skip) {
        j.relevant[q].push_back(static_cast<int>(i));
      }
    }
  }
  return j;
}

RelevanceJudgments euclidean_ground_truth(const DataMatrix& db, const DataMatrix& queries,
                                          int k, std::span<const int> self_ids) {
  if (db.dims() != queries.dims()) {
    fail(ErrorKind::kStructural, "euclidean ground truth: dimension mismatch");
  }
  if (k < 1) fail(ErrorKind::kArgument, "euclidean ground truth: k must be >= 1");
  check_self_ids(self_ids, static_cast<std::size_t>(queries.samples()));
  RelevanceJudgments j;
  j.relevant.resize(static_cast<std::size_t>(queries.samples()));
  std::vector<std::pair<double, int>> dist;
  for (Eigen::Index q = 0; q < queries.samples(); ++q) {
    const int skip = self_ids.empty() ? -1 : self_ids[q];
    dist.clear();
    for (Eigen::Index i = 0; i < db.samples(); ++i) {
      if (i == skip) continue;
      dist.emplace_back((db.values.col(i) - queries.values.col(q)).squaredNorm(),
                        static_cast<int>(i));
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    for (std::size_t r = 0; r < take; ++r) j.relevant[q].push_back(dist[r].second);
    std::sort(j.relevant[q].begin(), j.relevant[q].end());
  }
  return j;
}

MetricsReport evaluate(const BinaryCodes& db, const BinaryCodes& queries,
                       const RelevanceJudgments& judgments, std::optional<int> top_k) {
  if (db.bits != queries.bits) fail(ErrorKind::kStructural, "evaluate: code lengths differ");
  if (judgments.queries() != queries.n) {
    fail(ErrorKind::kStructural, "evaluate: judgments and query codes disagree in count");
  }
  const int k = top_k.value_or(db.n);
  MetricsReport report;
  report.bits = db.bits;
  std::vector<std::vector<PrPoint>> curves;
  for (int q = 0; q < queries.n; ++q) {
    if (judgments.l(q) == 0) {
      ++report.skipped;
      continue;
    }
    const std::vector<int> ranked = query_topk(db, queries.code(q), k);
    report.ap.push_back(average_precision(ranked, judgments.relevant[q], judgments.l(q)));
    curves.push_back(pr_curve(ranked, judgments.relevant[q]));
  }
  if (report.ap.empty()) fail(ErrorKind::kArgument, "evaluate: no query has a relevant item");
  report.map = mean_average_precision(report.ap);
  report.pr_curve = interpolate_11(curves);
  report.ham2 = ham2(queries, build_index(db), judgments);
  return report;
}

std::string to_json_line(const MetricsRecord& record) {
  nlohmann::ordered_json j;
  j["dataset"] = record.dataset;
  j["bits"] = record.bits;
  j["seed"] = record.seed;
  j["map"] = record.map;
  j["ham2"] = record.ham2;
  for (const auto& [name, value] : record.params) j[name] = value;
  j["status"] = record.status;
  return j.dump();
}

void append_metrics_jsonl(const MetricsRecord& record, const std::string& path) {
  std::ofstream os(path, std::ios::app);
  if (!os) fail(ErrorKind::kArgument, "cannot open " + path);
  os << to_json_line(record) << '\n';
}

void write_pr_csv(const std::vector<PrPoint>& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kArgument, "cannot open " + path);
  os.precision(17);
  os << "recall,precision\n";
  for (const auto& p : curve) os << p.recall << ',' << p.precision << '\n';
}

}  // namespace hch
