#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hch {

/// Samples grouped by clustering one feature's values. Classes are numbered
/// 0..c-1 in order of increasing center.
struct HyperClassPartition {
  std::vector<int> assignment;                      // per sample
  std::vector<std::vector<Eigen::Index>> members;   // ascending ids per class
  std::vector<double> centers;                      // strictly increasing
  int requested_classes = 0;
  bool reduced = false;   // fewer distinct values than requested classes
  double within_ss = 0.0; // sum of squared deviations from class centers

  int classes() const { return static_cast<int>(members.size()); }
  Eigen::Index samples() const { return static_cast<Eigen::Index>(assignment.size()); }
};

/// Exact 1-D k-means: minimizes within-class squared deviation over
/// contiguous groups of the sorted distinct values. Equal values always
/// share a class.
HyperClassPartition partition(std::span<const double> values, int c);

std::vector<Eigen::Index> class_sizes(const HyperClassPartition& p);

/// "sample_index,hyper_class" rows, both 0-based.
void write_partition_csv(const HyperClassPartition& p, const std::string& path);

}  // namespace hch
