#include "hch/stiefel.hpp"

#include <cmath>
#include <random>
#include <string>

#include "hch/error.hpp"

namespace hch {
namespace {

// Riemannian direction A Y for Y = U' (d x l), G = grad' (d x l).
Matrix skew_times_frame(const Matrix& y, const Matrix& g) {
  return g * (y.transpose() * y) - y * (g.transpose() * y);
}

}  // namespace

double OrthonormalFrame::feasibility_error() const {
  const Matrix e = u * u.transpose() - Matrix::Identity(u.rows(), u.rows());
  return e.cwiseAbs().maxCoeff();
}

OrthonormalFrame random_frame(int l, int d, std::uint64_t seed) {
  if (l < 1 || d < 1 || l > d) {
    fail(ErrorKind::kArgument, "random_frame needs 1 <= l <= d, got l=" +
                                   std::to_string(l) + " d=" + std::to_string(d));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, l);
  for (Eigen::Index c = 0; c < l; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, l);
  const Matrix r = qr.matrixQR().topRows(l).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < l; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return OrthonormalFrame{q.transpose()};
}

OrthonormalFrame cayley_step(const OrthonormalFrame& frame, const Matrix& grad,
                             double step) {
  if (!(step > 0.0)) fail(ErrorKind::kArgument, "cayley step must be > 0");
  if (grad.rows() != frame.rows() || grad.cols() != frame.cols()) {
    fail(ErrorKind::kStructural, "cayley_step: gradient shape differs from frame");
  }
  if (!grad.allFinite()) fail(ErrorKind::kArgument, "cayley_step: gradient is not finite");

  const Eigen::Index l = frame.rows();
  const Eigen::Index d = frame.cols();
  const Matrix y = frame.u.transpose();
  const Matrix g = grad.transpose();
  // A = P R' with P = [G, Y], R = [Y, -G]
  Matrix p(d, 2 * l), r(d, 2 * l);
  p << g, y;
  r << y, -g;
  const Matrix rtp = r.transpose() * p;
  const Matrix rty = r.transpose() * y;

  double tau = step;
  for (int attempt = 0; attempt <= 30; ++attempt) {
    Matrix system = Matrix::Identity(2 * l, 2 * l) + 0.5 * tau * rtp;
    Eigen::FullPivLU<Matrix> lu(system);
    if (lu.isInvertible()) {
      const Matrix y_new = y - tau * (p * lu.solve(rty));
      return OrthonormalFrame{y_new.transpose()};
    }
    tau *= 0.5;
  }
  fail(ErrorKind::kNumerical, "cayley_step: system stays singular after 30 step halvings");
}

StiefelResult minimize_on_stiefel(const FrameObjective& objective,
                                  const FrameGradient& gradient,
                                  const OrthonormalFrame& start,
                                  const StiefelOptions& options) {
  StiefelResult res;
  res.frame = start;
  double f = objective(start.u);
  if (!std::isfinite(f)) fail(ErrorKind::kNumerical, "stiefel objective is non-finite at U0");
  res.objective_trace.push_back(f);

  Matrix grad = gradient(res.frame.u);
  Matrix y = res.frame.u.transpose();
  Matrix dir = skew_times_frame(y, grad.transpose());
  Matrix prev_y, prev_dir;
  double tau = options.initial_step;
  double last_accepted = 0.0;

  for (int it = 1; it <= options.max_iter; ++it) {
    const double dir_norm = dir.norm();
    const double slope = -(grad.transpose().cwiseProduct(dir)).sum();
    if (dir_norm <= 1e-12 * std::max(1.0, grad.norm()) || slope >= 0.0) {
      res.stationary = true;
      break;
    }

    if (it == 1) {
      if (!(tau > 0.0)) tau = 1.0 / dir_norm;
    } else if (options.bb_steps) {
      const Matrix s = y - prev_y;
      const Matrix dg = dir - prev_dir;
      const double sy = std::abs(s.cwiseProduct(dg).sum());
      tau = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * last_accepted;
    } else {
      tau = 2.0 * last_accepted;
    }

    bool accepted = false;
    OrthonormalFrame trial;
    double f_trial = f;
    for (int bt = 0; bt <= options.max_backtracks; ++bt) {
      trial = cayley_step(res.frame, grad, tau);
      f_trial = objective(trial.u);
      if (!std::isfinite(f_trial)) {
        fail(ErrorKind::kNumerical, "stiefel objective is non-finite at iteration " +
                                        std::to_string(it));
      }
      if (f_trial <= f + options.armijo * tau * slope) {
        accepted = true;
        break;
      }
      tau *= options.backtrack;
    }
    if (!accepted) break;

    const double decrease = f - f_trial;
    prev_y = y;
    prev_dir = dir;
    last_accepted = tau;
    res.frame = std::move(trial);
    f = f_trial;
    res.objective_trace.push_back(f);
    res.iterations = it;

    grad = gradient(res.frame.u);
    y = res.frame.u.transpose();
    dir = skew_times_frame(y, grad.transpose());
    if (decrease <= options.tol * std::max(std::abs(f), 1e-300)) break;
  }
  return res;
}

}  // namespace hch
