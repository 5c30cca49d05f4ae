#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hch/data.hpp"
#include "hch/decision_feature.hpp"
#include "hch/error.hpp"

namespace {

using hch::Matrix;
using hch::Vector;

hch::DataMatrix make(const Matrix& m) {
  hch::DataMatrix x;
  x.values = m;
  return x;
}

TEST(KernelRow, HandValues) {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Vector k = hch::kernel_row(make(m), 0, 1.0);
  EXPECT_DOUBLE_EQ(k(0), std::exp(-9.0));
  EXPECT_DOUBLE_EQ(k(1), std::exp(-16.0));
  const Vector k1 = hch::kernel_row(make(m), 1, 1.0);
  EXPECT_DOUBLE_EQ(k1(0), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(k1(1), std::exp(-4.0));
}

TEST(KernelRow, ZeroColumnAndWideKernel) {
  Matrix m(3, 2);
  m << 5, 1, 0, 2, 0, 3;
  EXPECT_EQ(hch::kernel_row(make(m), 0, 1.0)(0), 1.0);
  const Vector wide = hch::kernel_row(make(m), 2, 1e12);
  EXPECT_NEAR(wide(0), 1.0, 1e-9);
  EXPECT_NEAR(wide(1), 1.0, 1e-9);
}

TEST(KernelRow, IndexError) {
  Matrix m = Matrix::Ones(2, 3);
  try {
    hch::kernel_row(make(m), 2, 1.0);
    FAIL();
  } catch (const hch::Error& e) {
    EXPECT_EQ(e.kind(), hch::ErrorKind::kIndex);
  }
}

TEST(KernelDesign, StacksRowsAndPermutesWithColumns) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Matrix m(4, 6);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  const auto k = hch::build_kernel_design(make(m), 2.5);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(Vector(k.rows.row(i).transpose()), hch::kernel_row(make(m), i, 2.5));
  }
  EXPECT_TRUE((k.rows.array() > 0.0).all() && (k.rows.array() <= 1.0).all());
  Matrix perm(4, 6);
  const int order[] = {3, 0, 5, 1, 4, 2};
  for (int j = 0; j < 6; ++j) perm.col(j) = m.col(order[j]);
  const auto kp = hch::build_kernel_design(make(perm), 2.5);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(kp.rows.col(j), k.rows.col(order[j]));

  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  const auto ks = hch::build_kernel_design(make(same), 1.0);
  EXPECT_EQ(ks.rows.row(0), ks.rows.row(1));
}

TEST(UpdateW, Scalar) {
  const Matrix w = hch::update_w(Matrix::Constant(1, 1, 4.0), Matrix::Constant(1, 1, 2.0),
                                 Vector::Ones(1), 2.0);
  EXPECT_NEAR(w(0, 0), 4.0 / 3.0, 1e-15);
}

TEST(UpdateW, InterpolationAndZero) {
  Matrix g(2, 2);
  g << 2, 1, 0.5, 3;
  const Matrix w = hch::update_w(g, g, Vector::Ones(2), 0.0);
  EXPECT_LT((w - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix z = hch::update_w(Matrix::Zero(2, 2), g, Vector::Ones(2), 1.0);
  EXPECT_EQ(z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(UpdateW, SingularWithoutRegularizer) {
  const Matrix g = Matrix::Ones(2, 3);
  try {
    hch::update_w(Matrix::Ones(2, 3), g, Vector::Ones(3), 0.0);
    FAIL();
  } catch (const hch::Error& e) {
    EXPECT_EQ(e.kind(), hch::ErrorKind::kNumerical);
  }
}

TEST(UpdateW, StationarityBothBranches) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> pos(0.1, 3.0);
  for (const auto [d, n] : {std::pair{3, 9}, std::pair{9, 3}}) {
    Matrix g(d, n), q(d, n);
    Vector f(n);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = nd(rng);
    for (int i = 0; i < q.size(); ++i) q.data()[i] = nd(rng);
    for (int i = 0; i < n; ++i) f(i) = pos(rng);
    const Matrix w = hch::update_w(q, g, f, 0.7);
    Matrix a = g.transpose() * g;
    a.diagonal() += 0.7 * f;
    EXPECT_LT((a * w - g.transpose() * q).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(UpdateF, Values) {
  Matrix w(2, 2);
  w << 0.3, 0.4, 0.0, 0.0;
  const Vector f = hch::update_f(w, 1e-12);
  EXPECT_NEAR(f(0), 1.0, 1e-9);
  EXPECT_NEAR(f(1), 5e5, 1e-6);
  const Vector f2 = hch::update_f(2.0 * w, 1e-12);
  EXPECT_NEAR(f2(0), 0.5 * f(0), 1e-9);
}

TEST(FeatureLoss, Cases) {
  Matrix m(2, 2);
  m << 1, 0, 2, 2;
  const auto x = make(m);
  const auto k = hch::build_kernel_design(x, 1.0);
  EXPECT_DOUBLE_EQ(hch::feature_loss(x, k, Matrix::Zero(2, 2), 0), 1.0);
  EXPECT_DOUBLE_EQ(hch::feature_loss(x, k, Matrix::Zero(2, 2), 1), 8.0);
  // k(X_-0) = (e^-4, e^-4); W with e^-4 (w00 + w10) = 1 and e^-4 (w01 + w11) = 0
  Matrix w = Matrix::Zero(2, 2);
  w(0, 0) = std::exp(4.0);
  EXPECT_NEAR(hch::feature_loss(x, k, w, 0), 0.0, 1e-24);
  EXPECT_EQ(hch::feature_losses(x, k, w)(0), hch::feature_loss(x, k, w, 0));
}

TEST(UpdateV, Cases) {
  Vector l(4);
  l << 0.0, 2.0, 1.0, 5.0;
  const Vector v = hch::update_v(l, 2.0);
  EXPECT_EQ(v(0), 1.0);
  EXPECT_EQ(v(1), 0.0);
  EXPECT_EQ(v(2), 0.5);
  EXPECT_EQ(v(3), 0.0);
}

TEST(Select, ArgmaxTiesDegenerate) {
  EXPECT_EQ(hch::select_decision_feature(Vector{{0.1, 0.7, 0.3}}).index, 1);
  EXPECT_EQ(hch::select_decision_feature(Vector{{0.5, 0.5}}).index, 0);
  const auto z = hch::select_decision_feature(Vector::Zero(3));
  EXPECT_EQ(z.index, 0);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(hch::select_decision_feature(Vector{{0.1, 0.7, 0.3, 0.2, 0.05}}).index, 1);
}

// Straight-line reimplementation of the alternation with dense W.
std::vector<double> dense_trace(const hch::DataMatrix& x, const Matrix& w0, const Vector& v0,
                                double varsigma, double gamma, int iters) {
  const auto k = hch::build_kernel_design(x, gamma);
  const double eps = 1e-12;
  Matrix w = w0;
  Vector v = v0;
  double sigma = 0.0;
  std::vector<double> out;
  for (int t = 1; t <= iters; ++t) {
    Vector f(w.rows());
    for (int j = 0; j < w.rows(); ++j) f(j) = 1.0 / (2.0 * std::sqrt(w.row(j).squaredNorm() + eps));
    Matrix q = x.values, g = k.rows;
    for (int i = 0; i < x.dims(); ++i) {
      q.row(i) *= std::sqrt(v(i));
      g.row(i) *= std::sqrt(v(i));
    }
    Matrix a = g.transpose() * g;
    for (int j = 0; j < a.rows(); ++j) a(j, j) += varsigma * f(j);
    w = a.inverse() * g.transpose() * q;
    Vector loss(x.dims());
    for (int i = 0; i < x.dims(); ++i) loss(i) = (x.values.row(i) - k.rows.row(i) * w).squaredNorm();
    if (t == 1) {
      std::vector<double> s(loss.data(), loss.data() + loss.size());
      std::sort(s.begin(), s.end());
      const double med = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
      sigma = 2.0 * med;
    }
    for (int i = 0; i < x.dims(); ++i) v(i) = loss(i) < sigma ? 1.0 - loss(i) / sigma : 0.0;
    double obj = v.dot(loss);
    for (int j = 0; j < w.rows(); ++j) obj += varsigma * std::sqrt(w.row(j).squaredNorm() + eps);
    obj += sigma * (0.5 * v.squaredNorm() - v.sum());
    out.push_back(obj);
  }
  return out;
}

TEST(Fit, MatchesDenseOracleOnMicroInstance) {
  Matrix m(2, 2);
  m << 0.5, -1.0, 1.5, 0.25;
  const auto x = make(m);
  hch::DecisionFeatureInit init;
  init.w.resize(2, 2);
  init.w << 0.2, 0.9, 0.4, 0.1;
  init.v = Vector{{0.6, 0.3}};
  hch::DecisionFeatureParams p;
  p.gamma = 1.0;
  p.tol = 0.0;
  p.max_iter = 6;
  const auto r = hch::fit_decision_feature(x, p, init);
  const auto ref = dense_trace(x, init.w, init.v, p.varsigma, 1.0, 6);
  ASSERT_EQ(r.state.objective_trace.size(), ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) EXPECT_NEAR(r.state.objective_trace[t], ref[t], 1e-10);
}

TEST(Fit, FactoredMatchesDenseWhenWide) {
  const auto ds = hch::synth_blobs(3, 12, 2, 4.0, 2);
  const auto x = hch::normalize(ds.data, hch::Normalization::kZeroMean);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  hch::DecisionFeatureInit init;
  init.w.resize(12, 12);
  for (int i = 0; i < init.w.size(); ++i) init.w.data()[i] = u(rng);
  init.v = Vector{{0.2, 0.5, 0.9}};
  hch::DecisionFeatureParams p;
  p.tol = 0.0;
  p.max_iter = 5;
  const auto r = hch::fit_decision_feature(x, p, init);
  const auto ref = dense_trace(x, init.w, init.v, p.varsigma, r.state.gamma, 5);
  for (std::size_t t = 0; t < ref.size(); ++t) {
    EXPECT_NEAR(r.state.objective_trace[t], ref[t], 1e-8 * std::max(1.0, std::abs(ref[t])));
  }
}

TEST(Fit, MonotoneAndBounded) {
  const auto ds = hch::synth_blobs(6, 80, 3, 10.0, 5);
  const auto x = hch::normalize(ds.data, hch::Normalization::kZeroMean);
  hch::DecisionFeatureParams p;
  p.tol = 0.0;
  p.seed = 3;
  const auto r = hch::fit_decision_feature(x, p);
  const auto& tr = r.state.objective_trace;
  ASSERT_EQ(tr.size(), 30u);
  for (std::size_t t = 1; t < tr.size(); ++t) EXPECT_LE(tr[t], tr[t - 1] + 1e-9 * std::abs(tr[t - 1]));
  EXPECT_TRUE((r.state.v.array() >= 0.0).all() && (r.state.v.array() <= 1.0).all());
  EXPECT_TRUE((r.state.losses.array() >= 0.0).all());
  EXPECT_TRUE((r.state.f_diag.array() > 0.0).all());
}

TEST(Fit, SingleIteration) {
  const auto ds = hch::synth_blobs(4, 20, 2, 10.0, 1);
  hch::DecisionFeatureParams p;
  p.max_iter = 1;
  const auto r = hch::fit_decision_feature(ds.data, p);
  EXPECT_EQ(r.state.iterations, 1);
  EXPECT_EQ(r.state.objective_trace.size(), 1u);
}

TEST(Fit, RecoversPlantedFeature) {
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ds = hch::synth_blobs(8, 200, 3, 10.0, seed, 3);
    const auto x = hch::normalize(ds.data, hch::Normalization::kZeroMean);
    hch::DecisionFeatureParams p;
    p.seed = seed;
    hits += hch::fit_decision_feature(x, p).choice.index == 3 ? 1 : 0;
  }
  EXPECT_GE(hits, 4);
}

}  // namespace
