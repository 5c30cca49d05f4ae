#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Features x samples. Column j is sample j.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> feature_names;  // empty or size dims()

  Eigen::Index dims() const { return values.rows(); }
  Eigen::Index samples() const { return values.cols(); }

  /// Throws kStructural unless d >= 2, n >= 2 and every entry is finite.
  void validate() const;
};

struct LabeledDataset {
  DataMatrix data;
  std::optional<std::vector<int>> labels;  // ground truth, evaluation only
};

enum class DataFormat { kCsv, kIdxUbyte, kRawF64 };
enum class Normalization { kNone, kZeroMean, kZscore };

DataFormat parse_data_format(const std::string& name);
Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization scheme);

struct LoadOptions {
  bool csv_label_column = false;        // last csv column holds integer labels
  std::optional<std::string> idx_labels_path;  // idx1-ubyte label file
};

LabeledDataset load_dataset(const std::string& path, DataFormat format,
                            const LoadOptions& options = {});

LabeledDataset parse_csv(const std::string& text, bool label_column);

/// Reads an idx1-ubyte label file.
std::vector<int> load_idx_labels(const std::string& path);

/// "HCD1" | u32 d | u32 n | d*n f64, column-major, all little-endian.
void save_raw_f64(const DataMatrix& x, const std::string& path);

/// Affine per-feature map y = (x - offset) * factor. factor is 0 for
/// constant features under zscore, so they map to 0.
struct NormalizationParams {
  Normalization scheme = Normalization::kNone;
  Vector offset;
  Vector factor;

  DataMatrix apply(const DataMatrix& x) const;
  Vector apply(const Vector& sample) const;
};

NormalizationParams fit_normalization(const DataMatrix& x, Normalization scheme);
DataMatrix normalize(const DataMatrix& x, Normalization scheme);

/// Gaussian blobs with unit noise on every feature; group g is shifted by
/// (g - (groups-1)/2) * separation along `planted_feature` (0-based,
/// default min(2, d-1)). Sample j belongs to group j % groups; labels are
/// 1-based group ids.
LabeledDataset synth_blobs(int d, int n, int groups, double separation,
                           std::uint64_t seed,
                           std::optional<int> planted_feature = std::nullopt);

/// Seeded shuffle, then the first floor(n * test_fraction) columns go to the
/// test side. Returns (train, test).
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double test_fraction,
                                                std::uint64_t seed);

/// Column subset in the given order, labels carried along.
LabeledDataset select_columns(const LabeledDataset& ds,
                              const std::vector<Eigen::Index>& columns);

}  // namespace hch
