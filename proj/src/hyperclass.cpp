#include "hch/hyperclass.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "hch/error.hpp"

namespace hch {
namespace {

// Weighted prefix sums over sorted distinct values; cost(a, b) is the
// squared deviation of the run [a, b) about its mean.
class RunCost {
 public:
  RunCost(const std::vector<double>& values, const std::vector<double>& weights)
      : w_(values.size() + 1, 0.0), s_(values.size() + 1, 0.0), q_(values.size() + 1, 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      w_[i + 1] = w_[i] + weights[i];
      s_[i + 1] = s_[i] + weights[i] * values[i];
      q_[i + 1] = q_[i] + weights[i] * values[i] * values[i];
    }
  }

  double operator()(std::size_t a, std::size_t b) const {
    const double w = w_[b] - w_[a];
    const double s = s_[b] - s_[a];
    return std::max(0.0, (q_[b] - q_[a]) - s * s / w);
  }

 private:
  std::vector<double> w_, s_, q_;
};

// Fills cur[m] = min_{j < m} prev[j] + cost(j, m) for m in [lo, hi], using
// monotonicity of the optimal split point.
void solve_layer(const RunCost& cost, const std::vector<double>& prev,
                 std::vector<double>& cur, std::vector<std::size_t>& arg,
                 std::size_t lo, std::size_t hi, std::size_t opt_lo, std::size_t opt_hi) {
  if (lo > hi) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_j = opt_lo;
  const std::size_t j_end = std::min(opt_hi, mid - 1);
  for (std::size_t j = opt_lo; j <= j_end; ++j) {
    const double val = prev[j] + cost(j, mid);
    if (val < best) {
      best = val;
      best_j = j;
    }
  }
  cur[mid] = best;
  arg[mid] = best_j;
  if (mid > lo) solve_layer(cost, prev, cur, arg, lo, mid - 1, opt_lo, best_j);
  solve_layer(cost, prev, cur, arg, mid + 1, hi, best_j, opt_hi);
}

}  // namespace

HyperClassPartition partition(std::span<const double> values, int c) {
  const std::size_t n = values.size();
  if (c < 1 || static_cast<std::size_t>(c) > n) {
    fail(ErrorKind::kArgument, "partition needs 1 <= c <= n");
  }
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::kArgument, "partition values must be finite");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> distinct;
  std::vector<double> weight;
  std::vector<std::size_t> rank(n);  // sample -> distinct-value slot
  for (std::size_t idx : order) {
    if (distinct.empty() || values[idx] != distinct.back()) {
      distinct.push_back(values[idx]);
      weight.push_back(0.0);
    }
    weight.back() += 1.0;
    rank[idx] = distinct.size() - 1;
  }

  const std::size_t m = distinct.size();
  HyperClassPartition p;
  p.requested_classes = c;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(c), m);
  p.reduced = k < static_cast<std::size_t>(c);

  const RunCost cost(distinct, weight);
  const double inf = std::numeric_limits<double>::infinity();
  // layer[j][e]: best cost of splitting the first e distinct values into j+1 runs
  std::vector<std::vector<double>> layer(k, std::vector<double>(m + 1, inf));
  std::vector<std::vector<std::size_t>> split(k, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t e = 1; e <= m; ++e) layer[0][e] = cost(0, e);
  for (std::size_t j = 1; j < k; ++j) {
    solve_layer(cost, layer[j - 1], layer[j], split[j], j + 1, m, j, m - 1);
  }

  std::vector<std::size_t> bounds(k + 1);
  bounds[k] = m;
  for (std::size_t j = k - 1; j > 0; --j) bounds[j] = split[j][bounds[j + 1]];
  bounds[0] = 0;

  std::vector<int> slot_class(m);
  p.centers.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    double w = 0.0, s = 0.0;
    for (std::size_t t = bounds[j]; t < bounds[j + 1]; ++t) {
      slot_class[t] = static_cast<int>(j);
      w += weight[t];
      s += weight[t] * distinct[t];
    }
    p.centers[j] = s / w;
  }
  p.within_ss = layer[k - 1][m];

  p.assignment.resize(n);
  p.members.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) {
    p.assignment[i] = slot_class[rank[i]];
    p.members[p.assignment[i]].push_back(static_cast<Eigen::Index>(i));
  }
  return p;
}

std::vector<Eigen::Index> class_sizes(const HyperClassPartition& p) {
  std::vector<Eigen::Index> sizes;
  sizes.reserve(p.members.size());
  for (const auto& m : p.members) sizes.push_back(static_cast<Eigen::Index>(m.size()));
  return sizes;
}

void write_partition_csv(const HyperClassPartition& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kArgument, "cannot write " + path);
  out << "sample_index,hyper_class\n";
  for (std::size_t i = 0; i < p.assignment.size(); ++i) {
    out << i << ',' << p.assignment[i] << '\n';
  }
}

}  // namespace hch
