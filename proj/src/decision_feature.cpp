#include "hch/decision_feature.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "hch/error.hpp"

namespace hch {
namespace {

double median_of(std::vector<double> values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

void check_feature(const DataMatrix& x, Eigen::Index i) {
  if (i < 0 || i >= x.dims()) {
    fail(ErrorKind::kIndex, "feature index " + std::to_string(i) +
                                " out of range [0, " + std::to_string(x.dims()) + ")");
  }
}

}  // namespace

Vector kernel_row(const DataMatrix& x, Eigen::Index i, double gamma) {
  check_feature(x, i);
  if (!(gamma > 0.0)) fail(ErrorKind::kArgument, "kernel gamma must be > 0");
  const Eigen::Index d = x.dims();
  const Eigen::Index n = x.samples();
  Vector row(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double t = 0.0;
    for (Eigen::Index r = 0; r < d; ++r) {
      if (r != i) t += x.values(r, j) * x.values(r, j);
    }
    row(j) = std::exp(-t / gamma);
  }
  return row;
}

double median_kernel_width(const DataMatrix& x) {
  const Vector sq = x.values.colwise().squaredNorm().transpose();
  std::vector<double> args;
  args.reserve(static_cast<std::size_t>(x.dims() * x.samples()));
  for (Eigen::Index i = 0; i < x.dims(); ++i) {
    for (Eigen::Index j = 0; j < x.samples(); ++j) {
      args.push_back(std::max(0.0, sq(j) - x.values(i, j) * x.values(i, j)));
    }
  }
  const double med = args.empty() ? 0.0 : median_of(std::move(args));
  return med > 0.0 ? med : 1.0;
}

KernelDesign build_kernel_design(const DataMatrix& x, double gamma) {
  KernelDesign k;
  k.gamma = gamma;
  k.rows.resize(x.dims(), x.samples());
  for (Eigen::Index i = 0; i < x.dims(); ++i) {
    k.rows.row(i) = kernel_row(x, i, gamma).transpose();
  }
  return k;
}

Matrix update_w(const Matrix& q, const Matrix& g, const Vector& f_diag,
                double varsigma) {
  const Eigen::Index n = g.cols();
  if (q.rows() != g.rows() || f_diag.size() != n || q.cols() != n) {
    fail(ErrorKind::kStructural, "update_w: shapes of Q, G and F disagree");
  }
  if (varsigma < 0.0) fail(ErrorKind::kArgument, "varsigma must be >= 0");
  if ((f_diag.array() <= 0.0).any()) {
    fail(ErrorKind::kArgument, "update_w: F must have a positive diagonal");
  }

  if (varsigma == 0.0) {
    const Matrix gtg = g.transpose() * g;
    Eigen::FullPivLU<Matrix> lu(gtg);
    if (!lu.isInvertible()) {
      fail(ErrorKind::kNumerical,
           "update_w: G'G is singular with varsigma = 0; use varsigma > 0");
    }
    return lu.solve(g.transpose() * q);
  }

  if (g.rows() < n) {
    // (G'G + sF)^{-1} G' = F^{-1} G' (G F^{-1} G' + sI)^{-1}
    const Vector f_inv = f_diag.cwiseInverse();
    const Matrix gf = g * f_inv.asDiagonal();
    Matrix m = gf * g.transpose();
    m.diagonal().array() += varsigma;
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success) {
      fail(ErrorKind::kNumerical, "update_w: reduced system factorization failed");
    }
    return gf.transpose() * ldlt.solve(q);
  }

  Matrix a = g.transpose() * g;
  a.diagonal() += varsigma * f_diag;
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) {
    fail(ErrorKind::kNumerical, "update_w: system factorization failed");
  }
  return ldlt.solve(g.transpose() * q);
}

Vector update_f(const Matrix& w, double epsilon) {
  if (!(epsilon > 0.0)) fail(ErrorKind::kArgument, "epsilon must be > 0");
  return (2.0 * (w.rowwise().squaredNorm().array() + epsilon).sqrt()).inverse().matrix();
}

double feature_loss(const DataMatrix& x, const KernelDesign& k, const Matrix& w,
                    Eigen::Index i) {
  check_feature(x, i);
  return (x.values.row(i) - k.rows.row(i) * w).squaredNorm();
}

Vector feature_losses(const DataMatrix& x, const KernelDesign& k, const Matrix& w) {
  return (x.values - k.rows * w).rowwise().squaredNorm();
}

Vector update_v(const Vector& losses, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::kArgument, "sigma must be > 0");
  Vector v(losses.size());
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    v(i) = losses(i) < sigma ? 1.0 - losses(i) / sigma : 0.0;
  }
  return v;
}

FeatureChoice select_decision_feature(const Vector& v) {
  if (v.size() == 0) fail(ErrorKind::kArgument, "empty weight vector");
  FeatureChoice c;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(c.index)) c.index = i;
  }
  c.degenerate = v(c.index) <= 0.0;
  return c;
}

double decision_objective(const Vector& losses, const Matrix& w, const Vector& v,
                          double varsigma, double sigma, double epsilon) {
  const double fit = v.dot(losses);
  const double sparsity = (w.rowwise().squaredNorm().array() + epsilon).sqrt().sum();
  const double self_paced = 0.5 * v.squaredNorm() - v.lpNorm<1>();
  return fit + varsigma * sparsity + sigma * self_paced;
}

namespace {

// One W-update in factored form plus the quantities the loop needs from W.
struct FactoredStep {
  Matrix left, right;
  Vector row_sq;  // ||W_j||^2
  Vector losses;
};

FactoredStep factored_step(const DataMatrix& x, const KernelDesign& k, const Vector& v,
                           const Vector& f_diag, double varsigma) {
  const Vector root_v = v.cwiseMax(0.0).cwiseSqrt();
  const Matrix q = root_v.asDiagonal() * x.values;
  const Matrix g = root_v.asDiagonal() * k.rows;
  FactoredStep st;
  if (g.rows() < g.cols()) {
    const Vector f_inv = f_diag.cwiseInverse();
    const Matrix gf = g * f_inv.asDiagonal();  // d x n
    Matrix m = gf * g.transpose();
    m.diagonal().array() += varsigma;
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success) {
      fail(ErrorKind::kNumerical, "update_w: reduced system factorization failed");
    }
    st.right = ldlt.solve(q);        // Z, d x n
    st.left = gf.transpose();        // W = F^{-1} G' Z
    const Matrix zz = st.right * st.right.transpose();
    st.row_sq = (gf.array() * (zz * gf).array()).colwise().sum().transpose().cwiseMax(0.0);
    st.losses = (x.values - (k.rows * st.left) * st.right).rowwise().squaredNorm();
  } else {
    st.left = update_w(q, g, f_diag, varsigma);
    st.right = Matrix::Identity(g.cols(), g.cols());
    st.row_sq = st.left.rowwise().squaredNorm();
    st.losses = feature_losses(x, k, st.left);
  }
  return st;
}

double objective_from_norms(const Vector& losses, const Vector& row_sq, const Vector& v,
                            double varsigma, double sigma, double epsilon) {
  const double sparsity = (row_sq.array() + epsilon).sqrt().sum();
  return v.dot(losses) + varsigma * sparsity + sigma * (0.5 * v.squaredNorm() - v.lpNorm<1>());
}

}  // namespace

DecisionFeatureResult fit_decision_feature(
    const DataMatrix& x, const DecisionFeatureParams& params,
    const std::optional<DecisionFeatureInit>& init) {
  if (!(params.varsigma > 0.0) || !(params.epsilon > 0.0) || !(params.tol >= 0.0) ||
      params.max_iter < 1 || (params.sigma && !(*params.sigma > 0.0)) ||
      (params.gamma && !(*params.gamma > 0.0))) {
    fail(ErrorKind::kArgument,
         "decision-feature parameters must be positive and max_iter >= 1");
  }
  const Eigen::Index d = x.dims();
  const Eigen::Index n = x.samples();

  FeatureWeightState s;
  s.varsigma = params.varsigma;
  s.epsilon = params.epsilon;
  s.gamma = params.gamma.value_or(median_kernel_width(x));
  const KernelDesign k = build_kernel_design(x, s.gamma);

  Vector row_sq(n);
  if (init) {
    if (init->w.rows() != n || init->w.cols() != n || init->v.size() != d) {
      fail(ErrorKind::kStructural, "initial W must be n x n and v length d");
    }
    row_sq = init->w.rowwise().squaredNorm();
    s.v = init->v;
  } else {
    // W0 entries drawn column by column; only its row norms are needed
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    row_sq.setZero();
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) {
        const double w = unit(rng);
        row_sq(r) += w * w;
      }
    }
    s.v.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) s.v(i) = unit(rng);
  }

  for (int t = 1; t <= params.max_iter; ++t) {
    s.f_diag = (2.0 * (row_sq.array() + s.epsilon).sqrt()).inverse().matrix();
    FactoredStep step = factored_step(x, k, s.v, s.f_diag, s.varsigma);
    s.w_left = std::move(step.left);
    s.w_right = std::move(step.right);
    row_sq = step.row_sq;
    s.losses = step.losses;
    if (t == 1) {
      if (params.sigma) {
        s.sigma = *params.sigma;
      } else {
        std::vector<double> l(s.losses.data(), s.losses.data() + d);
        const double med = median_of(std::move(l));
        s.sigma = med > 0.0 ? 2.0 * med : 1.0;
      }
    }
    s.v = update_v(s.losses, s.sigma);
    s.iterations = t;

    const double obj = objective_from_norms(s.losses, row_sq, s.v, s.varsigma, s.sigma, s.epsilon);
    if (!std::isfinite(obj)) {
      fail(ErrorKind::kNumerical, "decision-feature objective is non-finite at iteration " +
                                      std::to_string(t));
    }
    s.objective_trace.push_back(obj);
    if (t > 1) {
      const double prev = s.objective_trace[s.objective_trace.size() - 2];
      const double rel = std::abs(prev - obj) / std::max(std::abs(prev), 1e-300);
      if (rel < params.tol) break;
    }
  }

  DecisionFeatureResult r;
  r.choice = select_decision_feature(s.v);
  r.state = std::move(s);
  return r;
}

}  // namespace hch
