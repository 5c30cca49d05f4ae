#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hch/data.hpp"
#include "hch/decision_feature.hpp"
#include "hch/encode_index.hpp"
#include "hch/eval.hpp"
#include "hch/hash_train.hpp"
#include "hch/hyperclass.hpp"
#include "hch/model.hpp"

namespace hch {

struct RunConfig {
  std::string dataset;
  std::string format = "synth";  // csv | idx | raw | synth
  std::string labels;            // idx1-ubyte label file for format=idx
  bool label_column = false;     // csv: last column holds labels
  std::string normalization = "zero_mean";

  int synth_d = 16;
  int synth_n = 800;
  int synth_groups = 3;
  double synth_separation = 10.0;

  double test_fraction = 0.25;  // held out for eval and sweep

  double alpha = 1.0;
  double beta = 0.1;
  double lambda = 1.0;
  double eta = 1.0;
  double varsigma = 1.0;
  std::optional<double> sigma;
  std::optional<double> gamma;
  int bits = 16;
  int clusters = 3;
  int knn_k = 10;
  int max_iter_df = 30;
  int max_iter_hash = 20;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  std::string out = "out";

  std::string relevance = "class";  // class | euclidean
  int euclidean_k = 100;
  std::optional<int> top_k;         // unset: whole database

  HashParams hash_params() const;
  DecisionFeatureParams feature_params() const;
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Sets one field from its key=value text form. Unknown keys and
/// unparsable values are argument errors.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Flat key=value lines; '#' starts a comment.
void load_config_file(RunConfig& cfg, const std::string& path);

/// Loads or synthesizes the dataset named by cfg.
LabeledDataset load_data(const RunConfig& cfg);
/// (train, test) per cfg.test_fraction and cfg.seed; test is empty at 0.
std::pair<LabeledDataset, LabeledDataset> load_split(const RunConfig& cfg);

/// Decision feature and hyper-classes computed on normalized training data.
struct Grouping {
  NormalizationParams normalization;
  DataMatrix x;  // normalized
  DecisionFeatureResult feature;
  HyperClassPartition partition;
};

Grouping group_samples(const DataMatrix& raw, const RunConfig& cfg);

struct TrainedModel {
  ModelArtifact model;
  TrainResult train;
  BinaryCodes codes;  // training samples in original order
};

TrainedModel fit_hash(const Grouping& g, const RunConfig& cfg);
TrainedModel train_pipeline(const DataMatrix& raw, const RunConfig& cfg);

/// Normalizes with the model's parameters, then sgn(U y).
BinaryCodes encode_with(const ModelArtifact& model, const DataMatrix& raw);

RelevanceJudgments judgments_for(const RunConfig& cfg, const LabeledDataset& db,
                                 const LabeledDataset& queries);

/// MAP etc. of the held-out side against the training codes.
MetricsReport evaluate_model(const ModelArtifact& model, const BinaryCodes& db_codes,
                             const LabeledDataset& db, const LabeledDataset& queries,
                             const RunConfig& cfg);

/// Same protocol with sgn(P y), P a seeded Gaussian l x d matrix, on the
/// same normalized data.
MetricsReport evaluate_random_projection(const LabeledDataset& db,
                                         const LabeledDataset& queries,
                                         const RunConfig& cfg);

struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

struct SweepCell {
  std::vector<std::pair<std::string, double>> params;
  MetricsRecord record;
  bool ok = false;
};

std::vector<double> default_grid();
/// alpha x beta, then lambda x eta, each with the other pair fixed at 1.
std::vector<std::vector<SweepAxis>> default_sweep_families();

/// Cartesian cells of each family in order. Cells that throw are recorded
/// with their error and the sweep continues.
std::vector<SweepCell> run_sweep(const RunConfig& cfg,
                                 const std::vector<std::vector<SweepAxis>>& families,
                                 int jobs);
/// Highest MAP among ok cells; ties go to the lexicographically smallest
/// parameter list.
std::optional<std::size_t> best_cell(const std::vector<SweepCell>& cells);

// Commands. Each writes under cfg.out and logs to `log`.
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_encode(const RunConfig& cfg, const std::string& model_path,
                const std::string& codes_path, std::ostream& log);
void cmd_query(const RunConfig& cfg, const std::string& model_path,
               const std::string& codes_path, const std::string& queries_path,
               std::optional<int> top_k, std::ostream& out);
void cmd_eval(const RunConfig& cfg, const std::string& model_path,
              const std::string& codes_path, std::ostream& log);
void cmd_sweep(const RunConfig& cfg, const std::vector<std::vector<SweepAxis>>& families,
               int jobs, std::ostream& log);
void cmd_report(const std::string& metrics_path, std::ostream& out);

}  // namespace hch
