#pragma once

// Decision-feature discovery: every feature row is regressed on the kernel
// map of the remaining rows through a shared n x n relation matrix W with a
// row-sparse (l2,1) penalty, and each feature carries a self-paced weight
// v_i in [0, 1]. The feature with the largest weight is the one best
// explained by the others and is used as the decision feature.

#include <cstdint>
#include <optional>
#include <vector>

#include "hch/data.hpp"

namespace hch {

/// Row i is the kernel map of X with feature i removed:
/// entry j = exp(-||x_j without feature i||^2 / gamma).
struct KernelDesign {
  Matrix rows;  // d x n, entries in (0, 1]
  double gamma = 1.0;
};

Vector kernel_row(const DataMatrix& x, Eigen::Index i, double gamma);

/// Median over (i, j) of the kernel arguments ||x_j without feature i||^2.
/// Falls back to 1 when the median is zero.
double median_kernel_width(const DataMatrix& x);

KernelDesign build_kernel_design(const DataMatrix& x, double gamma);

/// Solves (G'G + varsigma F) W = G'Q. f_diag holds the diagonal of F.
/// Uses the d x d push-through form when d < n.
Matrix update_w(const Matrix& q, const Matrix& g, const Vector& f_diag,
                double varsigma);

/// F_jj = 1 / (2 sqrt(||W row j||^2 + epsilon)).
Vector update_f(const Matrix& w, double epsilon);

/// ||X_i - k(X_{-i}) W||^2.
double feature_loss(const DataMatrix& x, const KernelDesign& k, const Matrix& w,
                    Eigen::Index i);
Vector feature_losses(const DataMatrix& x, const KernelDesign& k, const Matrix& w);

/// v_i = 1 - L_i / sigma when L_i < sigma, otherwise 0.
Vector update_v(const Vector& losses, double sigma);

struct FeatureChoice {
  Eigen::Index index = 0;   // 0-based
  bool degenerate = false;  // every weight was zero
};

/// Argmax with ties to the smallest index.
FeatureChoice select_decision_feature(const Vector& v);

/// sum_i v_i L_i + varsigma sum_j sqrt(||W_j||^2 + eps)
///   + sigma (||v||^2 / 2 - ||v||_1)
double decision_objective(const Vector& losses, const Matrix& w, const Vector& v,
                          double varsigma, double sigma, double epsilon);

struct DecisionFeatureParams {
  double varsigma = 1.0;
  std::optional<double> sigma;  // unset: 2 x median of the first-iteration losses
  std::optional<double> gamma;  // unset: median_kernel_width
  double epsilon = 1e-12;
  int max_iter = 30;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// W is kept factored as w_left * w_right (n x r times r x n) so that it
/// never has to be formed when d < n.
struct FeatureWeightState {
  Vector v;
  Matrix w_left;
  Matrix w_right;
  Vector f_diag;
  Vector losses;
  double varsigma = 0.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;  // one value per completed iteration

  Matrix weights() const { return w_left * w_right; }
};

struct DecisionFeatureResult {
  FeatureWeightState state;
  FeatureChoice choice;
};

/// Explicit starting point; by default W and v are drawn i.i.d. U[0, 1].
struct DecisionFeatureInit {
  Matrix w;
  Vector v;
};

DecisionFeatureResult fit_decision_feature(
    const DataMatrix& x, const DecisionFeatureParams& params,
    const std::optional<DecisionFeatureInit>& init = std::nullopt);

}  // namespace hch
