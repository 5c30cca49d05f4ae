// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hch/data.hpp"
#include "hch/decision_feature.hpp"
#include "hch/encode_index.hpp"
#include "hch/error.hpp"
#include "hch/eval.hpp"
#include "hch/hash_train.hpp"
#include "hch/hyperclass.hpp"
#include "hch/pipeline.hpp"

namespace {

using hch::HashParams;
using hch::HashTrainState;
using hch::Matrix;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// max |UU' - I| seen after any outer iteration of any training run below
double g_max_feasibility = 0.0;
int g_training_runs = 0;
std::string g_feasibility_errors;

void note_training(const hch::TrainResult& r) {
  g_max_feasibility = std::max(g_max_feasibility, r.max_feasibility_error);
  ++g_training_runs;
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

hch::HyperClassPartition even_partition(int n, int c) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<double>((i * 7) % n);
  return hch::partition(v, c);
}

HashTrainState micro_state(int n, int d, int l, int c, std::uint64_t seed, HashParams& hp) {
  std::mt19937_64 rng(seed);
  hch::DataMatrix x;
  x.values = gaussian(d, n, rng);
  hp.bits = l;
  hp.knn_k = 3;
  HashTrainState st = hch::init_state(x, even_partition(n, c), hp, seed);
  hch::update_s(st, hp);
  st.h = gaussian(n, l, rng);
  st.class_means = hch::class_means(st.h, st.offsets);
  return st;
}

// Minimizer of z's + alpha ||s||^2 over the simplex with at most k positive
// entries, by enumerating supports.
std::vector<double> brute_simplex(const std::vector<double>& z, int k, double alpha) {
  const int m = static_cast<int>(z.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> arg(m, 0.0);
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    const int size = __builtin_popcount(mask);
    if (size > k) continue;
    double zsum = 0.0;
    for (int j = 0; j < m; ++j) {
      if (mask >> j & 1u) zsum += z[j];
    }
    const double tau = (1.0 + zsum / (2.0 * alpha)) / size;
    std::vector<double> s(m, 0.0);
    bool ok = true;
    double value = 0.0;
    for (int j = 0; j < m; ++j) {
      if (!(mask >> j & 1u)) continue;
      s[j] = tau - z[j] / (2.0 * alpha);
      if (s[j] < 0.0) ok = false;
      value += z[j] * s[j] + alpha * s[j] * s[j];
    }
    if (ok && value < best) {
      best = value;
      arg = s;
    }
  }
  return arg;
}

Outcome s_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ua(0.1, 5.0);
  int rows = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; rows < 200; ++seed) {
    HashParams hp;
    hp.alpha = ua(rng);
    const int c = 1 + static_cast<int>(seed % 3);
    const int n = c * (2 + static_cast<int>(seed % 9));  // n_k <= 10
    auto st = micro_state(n, 4, 2, c, seed, hp);
    hp.knn_k = 1 + static_cast<int>(seed % 9);
    hch::update_s(st, hp);
    for (int k = 0; k < st.classes() && rows < 200; ++k) {
      const auto off = st.offsets[k];
      const int nk = static_cast<int>(st.block_size(k));
      const Matrix s = Matrix(st.graphs.s[k]);
      const int kk = std::min(hp.knn_k, nk - 1);
      for (int a = 0; a < nk && rows < 200; ++a) {
        std::vector<double> z;
        for (int b = 0; b < nk; ++b) {
          if (b != a) z.push_back(((st.h.row(off + a) - st.h.row(off + b)) * st.u.u).squaredNorm());
        }
        const auto want = brute_simplex(z, kk, hp.alpha);
        for (int b = 0, q = 0; b < nk; ++b) {
          const double got = s(a, b);
          const double ref = b == a ? 0.0 : want[q++];
          worst = std::max(worst, std::abs(got - ref));
        }
        ++rows;
      }
    }
  }
  return {worst <= 1e-12, std::to_string(rows) + " rows, max |S - brute force| = " + fmt(worst)};
}

Outcome w_update() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> pos(0.1, 3.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 7;
    const int n = 2 + (t * 5) % 13;
    Matrix g(d, n), q(d, n);
    hch::Vector f(n);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = nd(rng);
    for (int i = 0; i < n; ++i) f(i) = pos(rng);
    const double vs = pos(rng);
    const Matrix w = hch::update_w(q, g, f, vs);
    Matrix a = g.transpose() * g;
    a.diagonal() += vs * f;
    worst = std::max(worst, (a * w - g.transpose() * q).cwiseAbs().maxCoeff());
  }
  int monotone = 0;
  double worst_rise = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = hch::synth_blobs(6 + static_cast<int>(seed % 4), 40 + 5 * static_cast<int>(seed), 3, 6.0, seed);
    hch::DecisionFeatureParams p;
    p.max_iter = 30;
    p.tol = 0.0;
    p.seed = seed;
    const auto r = hch::fit_decision_feature(hch::normalize(ds.data, hch::Normalization::kZeroMean), p);
    const auto& tr = r.state.objective_trace;
    bool ok = tr.size() == 30;
    for (std::size_t i = 1; i < tr.size(); ++i) {
      const double rise = (tr[i] - tr[i - 1]) / std::abs(tr[i - 1]);
      worst_rise = std::max(worst_rise, rise);
      if (rise > 1e-9) ok = false;
    }
    monotone += ok ? 1 : 0;
  }
  return {worst <= 1e-8 && monotone == 20,
          "max residual " + fmt(worst) + " over 100 systems; monotone " + std::to_string(monotone) +
              "/20 seeds over 30 iterations (max relative rise " + fmt(worst_rise) + ")"};
}

Outcome gradient_checks() {
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    HashParams hp;
    hp.alpha = 0.5 + 0.1 * t;
    hp.beta = 0.02;
    hp.lambda = 0.5 + 0.05 * t;
    hp.eta = 0.1 * (t % 4);
    const int c = 1 + t % 3;
    const int l = 1 + t % 4;
    const int n = 6 + t % 7;  // <= 12
    auto st = micro_state(n, l + 1 + t % 2, l, c, 300 + t, hp);
    const Matrix g = hch::grad_u(st, hp);
    Matrix fd(g.rows(), g.cols());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        auto plus = st, minus = st;
        plus.u.u(i, j) += h;
        minus.u.u(i, j) -= h;
        fd(i, j) = (hch::objective(plus, hp) - hch::objective(minus, hp)) / (2 * h);
      }
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-300));
  }
  return {worst <= 1e-5, "20 micro-states, max relative error " + fmt(worst)};
}

hch::RunConfig synth_config(int d, int n, int c, int l, std::uint64_t seed) {
  hch::RunConfig cfg;
  cfg.synth_d = d;
  cfg.synth_n = n;
  cfg.test_fraction = 0.0;
  cfg.clusters = c;
  cfg.bits = l;
  cfg.seed = seed;
  return cfg;
}

Outcome convergence() {
  int good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    hch::RunConfig cfg = synth_config(16, 600, 3, 16, seed);
    cfg.max_iter_hash = 10;
    cfg.tol = 0.0;
    const auto data = hch::load_split(cfg).first;
    const auto t = hch::train_pipeline(data.data, cfg);
    note_training(t.train);
    const auto& tr = t.train.state.objective_trace;
    double prev = t.train.state.initial_objective, best = std::numeric_limits<double>::infinity();
    for (double v : tr) {
      best = std::min(best, std::abs(v - prev) / std::abs(prev));
      prev = v;
    }
    good += best < 1e-4 ? 1 : 0;
    per_seed += (per_seed.empty() ? "" : " ") + fmt(best, 2);
  }
  return {good >= 4, std::to_string(good) + "/5 seeds reach relative change < 1e-4 within 10 "
                     "iterations (min change per seed: " + per_seed + ")"};
}

Outcome index_correctness() {
  std::mt19937_64 rng(404);
  std::bernoulli_distribution coin;
  int mismatches = 0;
  for (int l : {16, 32, 64}) {
    Matrix db(1000, l), qs(100, l);
    for (Eigen::Index i = 0; i < db.size(); ++i) db.data()[i] = coin(rng) ? 1 : -1;
    for (Eigen::Index i = 0; i < qs.size(); ++i) qs.data()[i] = coin(rng) ? 1 : -1;
    // plant near-duplicates so radius 2 is not empty
    for (int q = 0; q < 100; ++q) {
      db.row(q * 7) = qs.row(q);
      if (q % 2) db(q * 7, q % l) *= -1;
    }
    const auto codes = hch::pack(db);
    const auto qc = hch::pack(qs);
    const auto index = hch::build_index(codes);
    for (int q = 0; q < 100; ++q) {
      std::vector<std::pair<int, int>> scan;
      for (int i = 0; i < 1000; ++i) {
        scan.emplace_back(static_cast<int>((qs.row(q).array() != db.row(i).array()).count()), i);
      }
      std::sort(scan.begin(), scan.end());
      std::vector<int> within;
      for (const auto& [dist, id] : scan) {
        if (dist <= 2) within.push_back(id);
      }
      if (hch::query_radius(index, qc.code(q), 2) != within) ++mismatches;
      for (int k : {1, 10, 1000}) {
        const auto got = hch::query_topk(codes, qc.code(q), k);
        for (int r = 0; r < k; ++r) {
          if (got[r] != scan[r].second) {
            ++mismatches;
            break;
          }
        }
      }
    }
  }
  return {mismatches == 0, "l in {16, 32, 64}, 1000 codes x 100 queries, " +
                               std::to_string(mismatches) + " mismatching result lists"};
}

Outcome metric_correctness() {
  const std::vector<int> ranked = {0, 1, 2};
  const std::vector<int> rel = {0, 2};
  const double ap = hch::average_precision(ranked, rel, 2);
  const bool example = ap == 0.5 * (1.0 / 1.0 + 2.0 / 3.0);

  std::mt19937_64 rng(505);
  double worst = 0.0;
  std::vector<double> aps;
  for (int t = 0; t < 300; ++t) {
    const int n = 5 + t % 20;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int k = 1 + t % n;
    std::vector<int> relevant;
    for (int i = 0; i < n; ++i) {
      if (rng() % 3 == 0) relevant.push_back(i);
    }
    if (relevant.empty()) relevant.push_back(static_cast<int>(rng() % n));
    const std::vector<int> top(order.begin(), order.begin() + k);
    double sum = 0.0;
    int hits = 0;
    for (int r = 1; r <= k; ++r) {
      const bool hit = std::binary_search(relevant.begin(), relevant.end(), top[r - 1]);
      hits += hit;
      if (hit) sum += static_cast<double>(hits) / r;
    }
    const double want = sum / static_cast<double>(relevant.size());
    const double got = hch::average_precision(top, relevant, static_cast<int>(relevant.size()));
    worst = std::max(worst, std::abs(got - want));
    aps.push_back(got);
  }
  double mean = 0.0;
  for (double a : aps) mean += a;
  mean /= static_cast<double>(aps.size());
  worst = std::max(worst, std::abs(hch::mean_average_precision(aps) - mean));

  std::bernoulli_distribution coin;
  for (int t = 0; t < 50; ++t) {
    const int l = 4 + t % 6;
    Matrix db(20, l), qs(6, l);
    for (Eigen::Index i = 0; i < db.size(); ++i) db.data()[i] = coin(rng) ? 1 : -1;
    for (Eigen::Index i = 0; i < qs.size(); ++i) qs.data()[i] = coin(rng) ? 1 : -1;
    hch::RelevanceJudgments j;
    j.relevant.resize(6);
    for (int q = 0; q < 6; ++q) {
      for (int i = 0; i < 20; ++i) {
        if (coin(rng)) j.relevant[q].push_back(i);
      }
    }
    double want = 0.0;
    for (int q = 0; q < 6; ++q) {
      int total = 0, good = 0;
      for (int i = 0; i < 20; ++i) {
        if ((qs.row(q).array() != db.row(i).array()).count() <= 2) {
          ++total;
          good += std::binary_search(j.relevant[q].begin(), j.relevant[q].end(), i);
        }
      }
      if (total) want += static_cast<double>(good) / total;
    }
    want /= 6.0;
    worst = std::max(worst, std::abs(hch::ham2(hch::pack(qs), hch::build_index(hch::pack(db)), j) - want));
  }
  return {example && worst <= 1e-12, std::string("AP example ") + (example ? "= 5/6" : "!= 5/6 (" + fmt(ap, 17) + ")") +
                                         "; max deviation from direct evaluation " + fmt(worst)};
}

Outcome end_to_end() {
  double gap = 0.0, hch_sum = 0.0, base_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    hch::RunConfig cfg = synth_config(16, 800, 3, 16, seed);
    cfg.test_fraction = 0.25;
    const auto [train_side, test_side] = hch::load_split(cfg);
    const auto t = hch::train_pipeline(train_side.data, cfg);
    note_training(t.train);
    const double m = hch::evaluate_model(t.model, t.codes, train_side, test_side, cfg).map;
    const double b = hch::evaluate_random_projection(train_side, test_side, cfg).map;
    hch_sum += m;
    base_sum += b;
    gap += m - b;
  }
  gap /= 5.0;
  return {gap >= 0.05, "mean MAP " + fmt(hch_sum / 5, 4) + " vs random projection " +
                           fmt(base_sum / 5, 4) + ", gap " + fmt(gap, 3) + " (need >= 0.05)"};
}

double timed_training(const hch::RunConfig& cfg) {
  const auto data = hch::load_split(cfg).first;
  const auto t0 = Clock::now();
  const auto t = hch::train_pipeline(data.data, cfg);
  const double s = seconds_since(t0);
  note_training(t.train);
  return s;
}

Outcome complexity() {
  const auto median3 = [](int n) {
    std::vector<double> t;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) t.push_back(timed_training(synth_config(16, n, 3, 16, seed)));
    std::sort(t.begin(), t.end());
    return t[1];
  };
  const double t500 = median3(500);
  const double t1000 = median3(1000);
  const double ratio = t1000 / t500;
  // beta = 0.01: with five equal classes the objective is bounded below only for beta < lambda / 10
  hch::RunConfig big = synth_config(64, 2000, 5, 32, 1);
  big.beta = 0.01;
  const double tbig = timed_training(big);
  return {ratio <= 5.0 && tbig < 60.0,
          "n=500 " + fmt(t500) + " s, n=1000 " + fmt(t1000) + " s, ratio " + fmt(ratio) +
              "; n=2000 d=64 l=32 c=5 (beta=0.01) " + fmt(tbig) + " s"};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "hch_acceptance_determinism";
  const auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  bool same = true;
  for (std::uint64_t seed : {1u, 7u}) {
    std::string model, codes;
    for (int run = 0; run < 2; ++run) {
      hch::RunConfig cfg = synth_config(16, 600, 3, 16, seed);
      cfg.out = (root / std::to_string(run)).string();
      fs::remove_all(cfg.out);
      std::ostringstream log;
      hch::cmd_train(cfg, log);
      const std::string m = slurp(fs::path(cfg.out) / "model.hch");
      const std::string c = slurp(fs::path(cfg.out) / "codes.hcb");
      if (run == 1) same = same && m == model && c == codes && !m.empty();
      model = m;
      codes = c;
    }
  }
  fs::remove_all(root);
  return {same, same ? "model and code files byte-identical across reruns (seeds 1, 7)"
                     : "model or code files differ between reruns"};
}

}  // namespace

int main() {
  struct Criterion {
    std::string name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"S-update oracle", 5.0, s_oracle},
      {"W-update oracle", 30.0, w_update},
      {"gradient check", 30.0, gradient_checks},
      {"convergence", 120.0, convergence},
      {"index correctness", 10.0, index_correctness},
      {"metric correctness", 0.0, metric_correctness},
      {"end-to-end quality", 180.0, end_to_end},
      {"complexity budget", 0.0, complexity},
      {"determinism", 0.0, determinism},
  };
  int failed = 0;
  const auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  %-20s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failed += pass ? 0 : 1;
  };
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const hch::Error& e) {
      o = {false, std::string("error (") + hch::to_string(e.kind()) + "): " + e.what()};
      if (std::string(e.what()).find("orthonormality") != std::string::npos) {
        g_feasibility_errors += c.name + "; ";
      }
    }
    const double s = seconds_since(t0);
    bool pass = o.pass;
    std::string detail = o.detail + " [" + fmt(s) + " s";
    if (c.budget_s > 0) {
      detail += " / " + fmt(c.budget_s) + " s";
      if (s >= c.budget_s) pass = false;
    }
    report(c.name, pass, detail + "]");
  }
  report("feasibility", g_feasibility_errors.empty() && g_max_feasibility <= 1e-8,
         "max |UU' - I| = " + fmt(g_max_feasibility) + " over every iteration of " +
             std::to_string(g_training_runs) + " training runs" +
             (g_feasibility_errors.empty() ? "" : "; violated in " + g_feasibility_errors));
  std::printf("%d of %zu criteria failed\n", failed, criteria.size() + 1);
  return failed == 0 ? 0 : 1;
}
