#include "hch/hash_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/IterativeLinearSolvers>

#include "hch/error.hpp"

namespace hch {
namespace {

struct ObjectiveParts {
  double graph_fit = 0.0;  // sum_ij s_ij ||(h_i - h_j) U||^2
  double graph_reg = 0.0;  // alpha sum ||s_i||^2
  double beta = 0.0;       // signed mean-separation term
  double fit = 0.0;        // lambda ||H - X'U'||^2
  double reg = 0.0;        // eta ||U||^2

  double total() const { return graph_fit + graph_reg + beta + fit + reg; }
};

double beta_term(const Matrix& h, const std::vector<Eigen::Index>& offsets,
                 double beta) {
  const int c = static_cast<int>(offsets.size()) - 1;
  const Matrix mu = class_means(h, offsets);
  if (c == 1) {
    return beta * (h.rowwise() - mu.row(0)).squaredNorm();
  }
  // sum_{i in k} sum_{j != k} ||h_i - mu_j||^2
  //   = (c - 1) W_k + n_k sum_{j != k} ||mu_k - mu_j||^2
  double total = 0.0;
  for (int k = 0; k < c; ++k) {
    const auto nk = offsets[k + 1] - offsets[k];
    const double within =
        (h.middleRows(offsets[k], nk).rowwise() - mu.row(k)).squaredNorm();
    double between = 0.0;
    for (int j = 0; j < c; ++j) {
      if (j != k) between += (mu.row(k) - mu.row(j)).squaredNorm();
    }
    total += (c - 1) * within + static_cast<double>(nk) * between;
  }
  return -beta * total;
}

ObjectiveParts objective_parts(const HashTrainState& st, const HashParams& hp) {
  ObjectiveParts parts;
  const Matrix m = st.u.u * st.u.u.transpose();
  for (int k = 0; k < st.classes(); ++k) {
    const SparseMatrix& s = st.graphs.s[k];
    const Eigen::Index off = st.offsets[k];
    for (Eigen::Index a = 0; a < s.outerSize(); ++a) {
      double row_sq = 0.0;
      for (SparseMatrix::InnerIterator it(s, a); it; ++it) {
        const Eigen::RowVectorXd delta = st.h.row(off + a) - st.h.row(off + it.col());
        parts.graph_fit += it.value() * (delta * m * delta.transpose())(0, 0);
        row_sq += it.value() * it.value();
      }
      parts.graph_reg += hp.alpha * row_sq;
    }
  }
  parts.beta = beta_term(st.h, st.offsets, hp.beta);
  parts.fit = hp.lambda * (st.h - st.x.transpose() * st.u.u.transpose()).squaredNorm();
  parts.reg = hp.eta * st.u.u.squaredNorm();
  return parts;
}

// sum_k H_k' L_k H_k
Matrix laplacian_gram(const HashTrainState& st) {
  const Eigen::Index l = st.h.cols();
  Matrix c = Matrix::Zero(l, l);
  for (int k = 0; k < st.classes(); ++k) {
    const auto hk = st.h.middleRows(st.offsets[k], st.block_size(k));
    c.noalias() += hk.transpose() * (st.graphs.laplacian[k] * hk);
  }
  return c;
}

std::string trace_text(const std::vector<double>& trace) {
  std::ostringstream ss;
  ss.precision(10);
  for (std::size_t i = 0; i < trace.size(); ++i) ss << (i ? ", " : "") << trace[i];
  return ss.str();
}

}  // namespace

void HashParams::validate(Eigen::Index dims) const {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!(alpha > 0.0) || !(beta >= 0.0) || !(lambda > 0.0) || !(eta >= 0.0) ||
      !finite(alpha) || !finite(beta) || !finite(lambda) || !finite(eta)) {
    fail(ErrorKind::kArgument,
         "hash parameters need alpha > 0, beta >= 0, lambda > 0, eta >= 0, all finite");
  }
  if (bits < 1) fail(ErrorKind::kArgument, "bits must be >= 1");
  if (bits > dims) {
    fail(ErrorKind::kArgument, "bits (" + std::to_string(bits) +
                                   ") must not exceed the feature count d (" +
                                   std::to_string(dims) + ")");
  }
  if (knn_k < 1) fail(ErrorKind::kArgument, "knn_k must be >= 1");
  if (max_iter < 1 || u_inner_iter < 1) {
    fail(ErrorKind::kArgument, "iteration caps must be >= 1");
  }
  if (!(tol >= 0.0)) fail(ErrorKind::kArgument, "tol must be >= 0");
}

std::vector<Eigen::Index> inverse_order(const std::vector<Eigen::Index>& order) {
  std::vector<Eigen::Index> inv(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) inv[order[p]] = static_cast<Eigen::Index>(p);
  return inv;
}

HashTrainState init_state(const DataMatrix& x, const HyperClassPartition& p,
                          const HashParams& hp, std::uint64_t seed) {
  hp.validate(x.dims());
  const Eigen::Index n = x.samples();
  if (p.samples() != n) {
    fail(ErrorKind::kStructural, "partition covers " + std::to_string(p.samples()) +
                                     " samples, data has " + std::to_string(n));
  }
  HashTrainState st;
  st.partition = p;
  st.offsets.push_back(0);
  for (const auto& members : p.members) {
    if (members.empty()) fail(ErrorKind::kStructural, "partition has an empty class");
    st.order.insert(st.order.end(), members.begin(), members.end());
    st.offsets.push_back(static_cast<Eigen::Index>(st.order.size()));
  }
  if (static_cast<Eigen::Index>(st.order.size()) != n) {
    fail(ErrorKind::kStructural, "partition members do not cover every sample");
  }
  st.x.resize(x.dims(), n);
  for (Eigen::Index q = 0; q < n; ++q) st.x.col(q) = x.values.col(st.order[q]);

  st.u = random_frame(hp.bits, static_cast<int>(x.dims()), seed);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  st.h.resize(n, hp.bits);
  for (Eigen::Index c = 0; c < st.h.cols(); ++c) {
    for (Eigen::Index r = 0; r < n; ++r) st.h(r, c) = normal(rng);
  }

  for (int k = 0; k < st.classes(); ++k) {
    const Eigen::Index nk = st.block_size(k);
    st.graphs.s.emplace_back(nk, nk);
    st.graphs.laplacian.emplace_back(nk, nk);
    st.graphs.neighbors.push_back(static_cast<int>(std::min<Eigen::Index>(hp.knn_k, nk - 1)));
    if (nk <= hp.knn_k) st.graphs.clamped = true;
  }
  st.class_means = class_means(st.h, st.offsets);
  return st;
}

Matrix class_means(const Matrix& h, const std::vector<Eigen::Index>& offsets) {
  const int c = static_cast<int>(offsets.size()) - 1;
  Matrix mu(c, h.cols());
  for (int k = 0; k < c; ++k) {
    mu.row(k) = h.middleRows(offsets[k], offsets[k + 1] - offsets[k]).colwise().mean();
  }
  return mu;
}

Matrix excluded_means(const Matrix& means, int k) {
  Matrix out(means.rows() - 1, means.cols());
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < means.rows(); ++j) {
    if (j != k) out.row(r++) = means.row(j);
  }
  return out;
}

SparseMatrix laplacian(const SparseMatrix& s) {
  const SparseMatrix sym = 0.5 * (s + SparseMatrix(s.transpose()));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(sym.nonZeros() + sym.rows()));
  for (Eigen::Index a = 0; a < sym.outerSize(); ++a) {
    double degree = 0.0;
    for (SparseMatrix::InnerIterator it(sym, a); it; ++it) {
      degree += it.value();
      if (it.col() != a) trips.emplace_back(a, it.col(), -it.value());
    }
    // self loops cancel: D_aa - s_aa with s_aa counted in the degree
    for (SparseMatrix::InnerIterator it(sym, a); it; ++it) {
      if (it.col() == a) degree -= it.value();
    }
    if (degree != 0.0) trips.emplace_back(a, a, degree);
  }
  SparseMatrix lap(s.rows(), s.cols());
  lap.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

double objective(const HashTrainState& state, const HashParams& hp) {
  const double value = objective_parts(state, hp).total();
  if (!std::isfinite(value)) fail(ErrorKind::kNumerical, "hash objective is non-finite");
  return value;
}

void update_h_rows(HashTrainState& st, const HashParams& hp) {
  const Eigen::Index n = st.h.rows();
  const Eigen::Index l = st.h.cols();
  const int c = st.classes();
  const Matrix m = st.u.u * st.u.u.transpose();
  const Matrix target = st.x.transpose() * st.u.u.transpose();
  const Matrix eye = Matrix::Identity(l, l);

  Matrix class_sum(c, l);
  for (int k = 0; k < c; ++k) {
    class_sum.row(k) = st.h.middleRows(st.offsets[k], st.block_size(k)).colwise().sum();
  }
  Eigen::RowVectorXd total = class_sum.colwise().sum();

  for (int k = 0; k < c; ++k) {
    const Eigen::Index off = st.offsets[k];
    const Eigen::Index nk = st.block_size(k);
    const SparseMatrix& lap = st.graphs.laplacian[k];
    for (Eigen::Index a = 0; a < nk; ++a) {
      const Eigen::Index i = off + a;
      const Eigen::RowVectorXd h_old = st.h.row(i);

      // Row objective h A h' - 2 h b (+ const).
      double l_aa = 0.0;
      Eigen::RowVectorXd neighbor = Eigen::RowVectorXd::Zero(l);
      for (SparseMatrix::InnerIterator it(lap, a); it; ++it) {
        if (it.col() == a) {
          l_aa = it.value();
        } else {
          neighbor += it.value() * st.h.row(off + it.col());
        }
      }
      Matrix a_mat = (2.0 * l_aa) * m + hp.lambda * eye;
      Eigen::VectorXd b = hp.lambda * target.row(i).transpose() - 2.0 * (m * neighbor.transpose());

      if (c == 1) {
        const double nd = static_cast<double>(n);
        a_mat.diagonal().array() += hp.beta * (1.0 - 1.0 / nd);
        b += (hp.beta / nd) * (total - h_old).transpose();
      } else {
        const double nkd = static_cast<double>(nk);
        const double rest = static_cast<double>(n - nk);
        const Eigen::RowVectorXd own_others = class_sum.row(k) - h_old;
        const Eigen::RowVectorXd outside = total - class_sum.row(k);
        Eigen::RowVectorXd other_means = Eigen::RowVectorXd::Zero(l);
        for (int j = 0; j < c; ++j) {
          if (j != k) other_means += class_sum.row(j) / static_cast<double>(st.block_size(j));
        }
        a_mat.diagonal().array() -= hp.beta * ((c - 1) + rest / (nkd * nkd));
        b -= hp.beta *
             (other_means + outside / nkd - (rest / (nkd * nkd)) * own_others).transpose();
      }

      Eigen::LLT<Matrix> llt(a_mat);
      if (llt.info() != Eigen::Success) {
        fail(ErrorKind::kNumerical,
             "update_h_rows: row system for block row " + std::to_string(i) + " (sample " +
                 std::to_string(st.order[i]) + ", class " + std::to_string(k) +
                 ") is not positive definite; reduce beta relative to lambda");
      }
      const Eigen::RowVectorXd h_new = llt.solve(b).transpose();
      st.h.row(i) = h_new;
      class_sum.row(k) += h_new - h_old;
      total += h_new - h_old;
    }
  }
  st.class_means = class_means(st.h, st.offsets);
}

namespace {

struct MeanCoupling {
  double a = 0.0;  // diagonal shift of the block systems
  Matrix k;        // c x c low-rank part
  bool bounded = false;
};

MeanCoupling mean_coupling(const Eigen::VectorXd& sizes, double lambda, double beta) {
  const auto c = static_cast<int>(sizes.size());
  const double n = sizes.sum();
  MeanCoupling m;
  m.a = c == 1 ? lambda + beta : lambda - beta * (c - 1);
  m.k.resize(c, c);
  if (c == 1) {
    m.k(0, 0) = -beta / n;
  } else {
    Matrix pair(c, c);  // Laplacian of the complete graph with weights n_k + n_j
    for (int k = 0; k < c; ++k) {
      for (int j = 0; j < c; ++j) pair(k, j) = k == j ? 0.0 : -(sizes[k] + sizes[j]);
      pair(k, k) = -pair.row(k).sum();
    }
    const Eigen::VectorXd inv = sizes.cwiseInverse();
    m.k = beta * (c - 1) * Matrix(inv.asDiagonal()) -
          beta * inv.asDiagonal() * pair * inv.asDiagonal();
  }
  if (!(m.a > 0.0)) return m;
  // Q = 2L + aI + E'KE is congruent to blockdiag(A0, I + D K D), D = sqrt(N/a)
  const Eigen::VectorXd scale = (sizes / m.a).cwiseSqrt();
  const Matrix congruent = Matrix::Identity(c, c) + scale.asDiagonal() * m.k * scale.asDiagonal();
  m.bounded = Eigen::LLT<Matrix>(congruent).info() == Eigen::Success;
  return m;
}

double beta_limit(const Eigen::VectorXd& sizes, double lambda) {
  double lo = 0.0, hi = lambda;
  while (mean_coupling(sizes, lambda, hi).bounded) hi *= 2.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_coupling(sizes, lambda, mid).bounded ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

void update_h(HashTrainState& st, const HashParams& hp) {
  // With U U' = I the H-objective separates over bits: for each column y,
  //   y'(2L + aI + E'KE)y - 2 lambda p'y
  // where L is block diagonal, E (c x n) indicates classes and the c x c K
  // carries the mean terms. Since L_k 1 = 0, (2L_k + aI)^{-1} 1 = 1/a and
  // the low-rank part reduces to a c x c system.
  const Eigen::Index n = st.h.rows();
  const int c = st.classes();
  Eigen::VectorXd sizes(c);
  for (int k = 0; k < c; ++k) sizes[k] = static_cast<double>(st.block_size(k));
  const MeanCoupling mc = mean_coupling(sizes, hp.lambda, hp.beta);
  if (!mc.bounded) {
    std::ostringstream ss;
    ss << "update_h: the objective is unbounded below in H for beta=" << hp.beta
       << " with these class sizes; reduce beta below " << beta_limit(sizes, hp.lambda)
       << " (at lambda=" << hp.lambda << ")";
    fail(ErrorKind::kNumerical, ss.str());
  }
  const double a = mc.a;
  const Matrix& kmat = mc.k;

  const Matrix target = hp.lambda * (st.x.transpose() * st.u.u.transpose());
  Matrix y(n, st.h.cols());
  for (int k = 0; k < c; ++k) {
    const Eigen::Index off = st.offsets[k];
    const Eigen::Index nk = st.block_size(k);
    Eigen::SparseMatrix<double> sys = 2.0 * Eigen::SparseMatrix<double>(st.graphs.laplacian[k]);
    Eigen::SparseMatrix<double> eye(nk, nk);
    eye.setIdentity();
    sys += a * eye;
    // eigenvalues of sys lie in [a, a + 4 max degree]: well conditioned
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> solver;
    solver.setTolerance(1e-14);
    solver.setMaxIterations(static_cast<Eigen::Index>(std::max<Eigen::Index>(nk, 50)));
    solver.compute(sys);
    y.middleRows(off, nk) = solver.solve(target.middleRows(off, nk));
    if (solver.info() != Eigen::Success) {
      fail(ErrorKind::kNumerical, "update_h: linear solve did not converge for class " + std::to_string(k));
    }
  }
  Matrix sums(c, y.cols());
  for (int k = 0; k < c; ++k) sums.row(k) = y.middleRows(st.offsets[k], st.block_size(k)).colwise().sum();
  const Matrix reduced = Matrix::Identity(c, c) + sizes.asDiagonal() * kmat / a;
  const Matrix shift = kmat * reduced.partialPivLu().solve(sums) / a;
  for (int k = 0; k < c; ++k) {
    y.middleRows(st.offsets[k], st.block_size(k)).rowwise() -= shift.row(k);
  }
  if (!y.allFinite()) fail(ErrorKind::kNumerical, "update_h: non-finite codes");
  st.h = std::move(y);
  st.class_means = class_means(st.h, st.offsets);
}

Matrix grad_u(const HashTrainState& st, const HashParams& hp) {
  const Matrix& u = st.u.u;
  const Matrix xxt = st.x * st.x.transpose();
  return 4.0 * laplacian_gram(st) * u +
         2.0 * hp.lambda * (u * xxt - st.h.transpose() * st.x.transpose()) +
         2.0 * hp.eta * u;
}

std::pair<FrameObjective, FrameGradient> u_subproblem(const HashTrainState& st,
                                                      const HashParams& hp) {
  const ObjectiveParts parts = objective_parts(st, hp);
  const double fixed = parts.graph_reg + parts.beta + hp.lambda * st.h.squaredNorm();
  const Matrix gram = laplacian_gram(st);
  const Matrix xxt = st.x * st.x.transpose();
  const Matrix hx = st.h.transpose() * st.x.transpose();  // l x d
  const double lambda = hp.lambda;
  const double eta = hp.eta;

  FrameObjective f = [=](const Matrix& u) {
    const Matrix uut = u * u.transpose();
    return fixed + 2.0 * uut.cwiseProduct(gram).sum() +
           lambda * (-2.0 * u.cwiseProduct(hx).sum() + (u * xxt).cwiseProduct(u).sum()) +
           eta * u.squaredNorm();
  };
  FrameGradient g = [=](const Matrix& u) -> Matrix {
    return 4.0 * gram * u + 2.0 * lambda * (u * xxt - hx) + 2.0 * eta * u;
  };
  return {std::move(f), std::move(g)};
}

StiefelResult update_u(HashTrainState& st, const HashParams& hp) {
  auto [f, g] = u_subproblem(st, hp);
  StiefelOptions opts;
  opts.max_iter = hp.u_inner_iter;
  StiefelResult res = minimize_on_stiefel(f, g, st.u, opts);
  st.u = res.frame;
  return res;
}

std::vector<std::pair<Eigen::Index, double>> capped_simplex_row(
    std::span<const double> z, int k, double alpha) {
  if (!(alpha > 0.0)) fail(ErrorKind::kArgument, "alpha must be > 0");
  const auto m = static_cast<Eigen::Index>(z.size());
  const Eigen::Index kk = std::min<Eigen::Index>(k, m);
  std::vector<std::pair<Eigen::Index, double>> out;
  if (kk <= 0) return out;

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return z[a] < z[b] || (z[a] == z[b] && a < b);
                    });

  // tau_r = 1/r + (1/(2 r alpha)) sum_{q <= r} z_(q); keep the largest r whose
  // r-th weight -z_(r)/(2 alpha) + tau_r stays positive.
  double prefix = 0.0;
  Eigen::Index support = 0;
  double tau = 0.0;
  for (Eigen::Index r = 1; r <= kk; ++r) {
    prefix += z[idx[r - 1]];
    const double tau_r = 1.0 / r + prefix / (2.0 * r * alpha);
    if (-z[idx[r - 1]] / (2.0 * alpha) + tau_r > 0.0) {
      support = r;
      tau = tau_r;
    }
  }
  out.reserve(static_cast<std::size_t>(support));
  for (Eigen::Index r = 0; r < support; ++r) {
    out.emplace_back(idx[r], -z[idx[r]] / (2.0 * alpha) + tau);
  }
  return out;
}

Matrix block_distances(const HashTrainState& st, int k) {
  const auto hk = st.h.middleRows(st.offsets[k], st.block_size(k));
  const Matrix m = st.u.u * st.u.u.transpose();
  const Matrix gram = hk * m * hk.transpose();
  const Eigen::VectorXd diag = gram.diagonal();
  Matrix z = (-2.0 * gram).colwise() + diag;
  z.rowwise() += diag.transpose();
  z = z.cwiseMax(0.0);
  z.diagonal().setZero();
  return z;
}

void update_s(HashTrainState& st, const HashParams& hp) {
  st.graphs.clamped = false;
  for (int k = 0; k < st.classes(); ++k) {
    const Eigen::Index nk = st.block_size(k);
    const int neighbors = static_cast<int>(std::min<Eigen::Index>(hp.knn_k, nk - 1));
    if (nk <= hp.knn_k) st.graphs.clamped = true;
    st.graphs.neighbors[k] = neighbors;

    const Matrix z = block_distances(st, k);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nk * std::max(neighbors, 0)));
    std::vector<double> row(static_cast<std::size_t>(std::max<Eigen::Index>(nk - 1, 0)));
    for (Eigen::Index a = 0; a < nk; ++a) {
      // candidates are every other member; slot q maps to column q + (q >= a)
      for (Eigen::Index q = 0; q + 1 < nk; ++q) row[q] = z(a, q + (q >= a ? 1 : 0));
      for (const auto& [q, w] : capped_simplex_row(row, neighbors, hp.alpha)) {
        trips.emplace_back(a, q + (q >= a ? 1 : 0), w);
      }
    }
    SparseMatrix s(nk, nk);
    s.setFromTriplets(trips.begin(), trips.end());
    st.graphs.laplacian[k] = laplacian(s);
    st.graphs.s[k] = std::move(s);
  }
}

double graph_subproblem_value(const HashTrainState& st, const HashParams& hp) {
  const ObjectiveParts parts = objective_parts(st, hp);
  return parts.graph_fit + parts.graph_reg;
}

TrainResult train(const DataMatrix& x, const HyperClassPartition& p,
                  const HashParams& hp, std::uint64_t seed) {
  TrainResult res;
  res.state = init_state(x, p, hp, seed);
  HashTrainState& st = res.state;
  st.initial_objective = objective(st, hp);
  double prev = st.initial_objective;
  for (int t = 1; t <= hp.max_iter; ++t) {
    update_h(st, hp);
    update_u(st, hp);
    update_s(st, hp);
    const double value = objective_parts(st, hp).total();
    st.objective_trace.push_back(value);
    res.iterations = t;
    if (!std::isfinite(value)) {
      fail(ErrorKind::kNumerical, "hash objective became non-finite at iteration " +
                                      std::to_string(t) + "; trace: " +
                                      trace_text(st.objective_trace));
    }
    const double feas = st.u.feasibility_error();
    res.max_feasibility_error = std::max(res.max_feasibility_error, feas);
    if (feas > 1e-8) {
      fail(ErrorKind::kNumerical, "U left the orthonormality constraint at iteration " +
                                      std::to_string(t));
    }
    const double rel = std::abs(value - prev) / std::max(std::abs(prev), 1e-300);
    prev = value;
    if (rel < hp.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace hch
