#pragma once

#include <string>
#include <vector>

#include "hch/data.hpp"
#include "hch/hash_train.hpp"
#include "hch/stiefel.hpp"

namespace hch {

/// Everything needed to encode new samples, plus the hyperparameters that
/// produced it.
struct ModelArtifact {
  OrthonormalFrame u;
  int classes = 0;
  HashParams hp;
  double varsigma = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  NormalizationParams normalization;

  int bits() const { return static_cast<int>(u.rows()); }
  int dims() const { return static_cast<int>(u.cols()); }
};

/// "HCH1" | u32 version=1 | u32 l | u32 d | u32 c | f64 alpha beta lambda
/// eta varsigma sigma gamma | u32 knn_k | u32 normalization (0 none,
/// 1 zero_mean, 2 zscore) | U row-major f64 | when normalized: d f64
/// offsets, d f64 factors. Little-endian throughout.
void write_model(const ModelArtifact& model, const std::string& path);
ModelArtifact read_model(const std::string& path);

/// "iteration,objective"; iteration 0 is the value before the first update.
void write_trace_csv(double initial, const std::vector<double>& trace, const std::string& path);

}  // namespace hch
