#pragma once

// Feasible descent on { U in R^{l x d} : U U' = I } with Cayley-transform
// curvilinear steps. Everything is expressed for row-orthonormal U; the
// skew generator is A = G'U - U'G (d x d) and is only ever applied through
// its rank-2l factorization.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace hch {

using Matrix = Eigen::MatrixXd;

struct OrthonormalFrame {
  Matrix u;  // l x d, orthonormal rows

  Eigen::Index rows() const { return u.rows(); }
  Eigen::Index cols() const { return u.cols(); }

  /// max |U U' - I|
  double feasibility_error() const;
};

/// Orthonormalized seeded Gaussian matrix (QR with positive R diagonal).
OrthonormalFrame random_frame(int l, int d, std::uint64_t seed);

/// One Cayley step U' = [(I + s/2 A)^{-1} (I - s/2 A) U']' with
/// A = grad'U - U'grad. A numerically singular system halves the step up to
/// 30 times before failing.
OrthonormalFrame cayley_step(const OrthonormalFrame& frame, const Matrix& grad,
                             double step);

struct StiefelOptions {
  int max_iter = 100;
  double tol = 1e-10;          // relative decrease that ends the search
  bool bb_steps = false;       // Barzilai-Borwein trial step instead of doubling
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  double initial_step = 0.0;   // <= 0: 1 / ||A U'||_F at the start
};

struct StiefelResult {
  OrthonormalFrame frame;
  std::vector<double> objective_trace;  // f at U0, then at each accepted iterate
  int iterations = 0;
  bool stationary = false;  // projected gradient vanished
};

using FrameObjective = std::function<double(const Matrix&)>;
using FrameGradient = std::function<Matrix(const Matrix&)>;

/// Monotone curvilinear search with Armijo backtracking.
StiefelResult minimize_on_stiefel(const FrameObjective& objective,
                                  const FrameGradient& gradient,
                                  const OrthonormalFrame& start,
                                  const StiefelOptions& options = {});

}  // namespace hch
