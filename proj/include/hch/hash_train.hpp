#pragma once

// Hyper-class hash learning. Relaxed codes H (n x l, rows grouped by
// hyper-class), a row-orthonormal projection U (l x d) and one sparse
// similarity graph per hyper-class are optimized alternately on
//
//   sum_k [ sum_ij s^k_ij ||(h_i - h_j) U||^2 + alpha sum_i ||s^k_i||^2 ]
//   + beta_term(H) + lambda ||H - X'U'||_F^2 + eta ||U||_F^2
//
// where beta_term is +beta sum_i ||h_i - mu||^2 for a single class and
// -beta sum_k sum_{i in k} sum_{j != k} ||h_i - mu_j||^2 otherwise, with
// mu_k the mean code of class k.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "hch/data.hpp"
#include "hch/hyperclass.hpp"
#include "hch/stiefel.hpp"

namespace hch {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct HashParams {
  double alpha = 1.0;
  double beta = 0.1;
  double lambda = 1.0;
  double eta = 1.0;
  int bits = 16;
  int knn_k = 10;
  int max_iter = 20;
  double tol = 1e-5;
  int u_inner_iter = 10;  // curvilinear steps per U-update

  void validate(Eigen::Index dims) const;
};

struct SimilarityGraph {
  std::vector<SparseMatrix> s;          // per class, n_k x n_k, row-stochastic
  std::vector<SparseMatrix> laplacian;  // D - (S + S')/2
  std::vector<int> neighbors;           // effective knn per class
  bool clamped = false;                 // some class had n_k <= knn_k
};

struct HashTrainState {
  Matrix x;                          // d x n, columns in block order
  Matrix h;                          // n x l, same order
  OrthonormalFrame u;                // l x d
  SimilarityGraph graphs;
  HyperClassPartition partition;
  std::vector<Eigen::Index> order;   // block position -> original sample
  std::vector<Eigen::Index> offsets; // c + 1 block boundaries
  Matrix class_means;                // c x l, refreshed after each H-sweep
  double initial_objective = 0.0;
  std::vector<double> objective_trace;  // one value per outer iteration

  int classes() const { return static_cast<int>(offsets.size()) - 1; }
  Eigen::Index block_size(int k) const { return offsets[k + 1] - offsets[k]; }
};

/// Reorders X into hyper-class blocks, zero graphs, U from random_frame and
/// H ~ N(0, 1), both seeded.
HashTrainState init_state(const DataMatrix& x, const HyperClassPartition& p,
                          const HashParams& hp, std::uint64_t seed);

/// Inverse of state.order: original sample -> block position.
std::vector<Eigen::Index> inverse_order(const std::vector<Eigen::Index>& order);

/// Row k is the mean of block k of H.
Matrix class_means(const Matrix& h, const std::vector<Eigen::Index>& offsets);

/// The c-1 rows of `means` other than row k.
Matrix excluded_means(const Matrix& means, int k);

/// D - (S + S')/2 with D the row sums of the symmetrized graph.
SparseMatrix laplacian(const SparseMatrix& s);

double objective(const HashTrainState& state, const HashParams& hp);

/// Exact minimizer of the objective over H with U and S fixed; relies on
/// U U' = I. Every row is then also the minimizer of its own row problem.
void update_h(HashTrainState& state, const HashParams& hp);

/// One Gauss-Seidel sweep: each row in turn set to its exact row minimizer
/// with the class sums tracking earlier rows. Works for any U.
void update_h_rows(HashTrainState& state, const HashParams& hp);

/// Euclidean gradient of objective() with respect to U.
Matrix grad_u(const HashTrainState& state, const HashParams& hp);

/// Objective and gradient as functions of U alone for the current H and S.
std::pair<FrameObjective, FrameGradient> u_subproblem(const HashTrainState& state,
                                                      const HashParams& hp);

StiefelResult update_u(HashTrainState& state, const HashParams& hp);

/// Minimizer of ||s + z/(2 alpha)||^2 over the simplex with at most k
/// positive entries; returns (candidate index, weight) pairs in ascending
/// distance order. Nonzero weights go to the k smallest distances.
std::vector<std::pair<Eigen::Index, double>> capped_simplex_row(
    std::span<const double> z, int k, double alpha);

/// Squared projected distances within block k.
Matrix block_distances(const HashTrainState& state, int k);

void update_s(HashTrainState& state, const HashParams& hp);

/// sum_i sum_j z_ij s_ij + alpha ||s_i||^2 summed over every row of every class.
double graph_subproblem_value(const HashTrainState& state, const HashParams& hp);

struct TrainResult {
  HashTrainState state;
  int iterations = 0;
  bool converged = false;
  double max_feasibility_error = 0.0;  // max |UU' - I| after each iteration
};

/// Alternates update_h, update_u, update_s until the relative objective
/// change drops below hp.tol or hp.max_iter iterations have run.
TrainResult train(const DataMatrix& x, const HyperClassPartition& p,
                  const HashParams& hp, std::uint64_t seed);

}  // namespace hch
