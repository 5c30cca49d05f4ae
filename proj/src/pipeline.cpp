#include "hch/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hch/error.hpp"

namespace hch {
namespace {

template <typename F>
auto stage(const char* module, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(module) + ": " + e.what());
  }
}

double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    fail(ErrorKind::kArgument, "config: " + key + " expects a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorKind::kArgument, "config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  fail(ErrorKind::kArgument, "config: " + key + " expects true/false, got '" + text + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::string dataset_name(const RunConfig& cfg) {
  if (cfg.format == "synth") return "synth";
  return std::filesystem::path(cfg.dataset).filename().string();
}

bool is_feature_param(const std::string& name) {
  return name == "varsigma" || name == "sigma" || name == "gamma" || name == "clusters" ||
         name == "max_iter_df";
}

void set_numeric(RunConfig& cfg, const std::string& name, double value) {
  set_config_value(cfg, name, num(value));
}

}  // namespace

HashParams RunConfig::hash_params() const {
  HashParams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  hp.lambda = lambda;
  hp.eta = eta;
  hp.bits = bits;
  hp.knn_k = knn_k;
  hp.max_iter = max_iter_hash;
  hp.tol = tol;
  return hp;
}

DecisionFeatureParams RunConfig::feature_params() const {
  DecisionFeatureParams p;
  p.varsigma = varsigma;
  p.sigma = sigma;
  p.gamma = gamma;
  p.max_iter = max_iter_df;
  p.seed = seed;
  return p;
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e = {
      {"dataset", dataset},
      {"format", format},
      {"normalization", normalization},
      {"alpha", num(alpha)},
      {"beta", num(beta)},
      {"lambda", num(lambda)},
      {"eta", num(eta)},
      {"varsigma", num(varsigma)},
      {"sigma", sigma ? num(*sigma) : "auto"},
      {"gamma", gamma ? num(*gamma) : "auto"},
      {"bits", std::to_string(bits)},
      {"clusters", std::to_string(clusters)},
      {"knn_k", std::to_string(knn_k)},
      {"max_iter_df", std::to_string(max_iter_df)},
      {"max_iter_hash", std::to_string(max_iter_hash)},
      {"tol", num(tol)},
      {"seed", std::to_string(seed)},
      {"out", out},
  };
  if (format == "synth") {
    e.emplace_back("synth_d", std::to_string(synth_d));
    e.emplace_back("synth_n", std::to_string(synth_n));
    e.emplace_back("synth_groups", std::to_string(synth_groups));
    e.emplace_back("synth_separation", num(synth_separation));
  }
  return e;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  if (key == "dataset") cfg.dataset = value;
  else if (key == "format") {
    if (value != "synth") parse_data_format(value);
    cfg.format = value;
  } else if (key == "labels") cfg.labels = value;
  else if (key == "label_column") cfg.label_column = parse_bool(key, value);
  else if (key == "normalization") {
    parse_normalization(value);
    cfg.normalization = value;
  } else if (key == "synth_d") cfg.synth_d = as_int();
  else if (key == "synth_n") cfg.synth_n = as_int();
  else if (key == "synth_groups") cfg.synth_groups = as_int();
  else if (key == "synth_separation") cfg.synth_separation = parse_real(key, value);
  else if (key == "test_fraction") cfg.test_fraction = parse_real(key, value);
  else if (key == "alpha") cfg.alpha = parse_real(key, value);
  else if (key == "beta") cfg.beta = parse_real(key, value);
  else if (key == "lambda") cfg.lambda = parse_real(key, value);
  else if (key == "eta") cfg.eta = parse_real(key, value);
  else if (key == "varsigma") cfg.varsigma = parse_real(key, value);
  else if (key == "sigma") {
    cfg.sigma = value == "auto" ? std::nullopt : std::optional<double>(parse_real(key, value));
  } else if (key == "gamma") {
    cfg.gamma = value == "auto" ? std::nullopt : std::optional<double>(parse_real(key, value));
  } else if (key == "bits") cfg.bits = as_int();
  else if (key == "clusters") cfg.clusters = as_int();
  else if (key == "knn_k") cfg.knn_k = as_int();
  else if (key == "max_iter_df") cfg.max_iter_df = as_int();
  else if (key == "max_iter_hash") cfg.max_iter_hash = as_int();
  else if (key == "tol") cfg.tol = parse_real(key, value);
  else if (key == "seed") {
    const long long s = parse_int(key, value);
    if (s < 0) fail(ErrorKind::kArgument, "config: seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "out") cfg.out = value;
  else if (key == "relevance") {
    if (value != "class" && value != "euclidean") {
      fail(ErrorKind::kArgument, "config: relevance must be class or euclidean");
    }
    cfg.relevance = value;
  } else if (key == "euclidean_k") cfg.euclidean_k = as_int();
  else if (key == "top_k") {
    cfg.top_k = value == "all" ? std::nullopt : std::optional<int>(as_int());
  } else {
    fail(ErrorKind::kArgument, "config: unknown key '" + key + "'");
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kArgument, "cannot open config file " + path);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kArgument, path + ":" + std::to_string(number) + ": expected key=value");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

LabeledDataset load_data(const RunConfig& cfg) {
  return stage("data", [&] {
    if (cfg.format == "synth") {
      return synth_blobs(cfg.synth_d, cfg.synth_n, cfg.synth_groups, cfg.synth_separation,
                         cfg.seed);
    }
    if (cfg.dataset.empty()) fail(ErrorKind::kArgument, "no dataset path given");
    LoadOptions opts;
    opts.csv_label_column = cfg.label_column;
    if (!cfg.labels.empty()) opts.idx_labels_path = cfg.labels;
    LabeledDataset ds = load_dataset(cfg.dataset, parse_data_format(cfg.format), opts);
    ds.data.validate();
    return ds;
  });
}

std::pair<LabeledDataset, LabeledDataset> load_split(const RunConfig& cfg) {
  LabeledDataset ds = load_data(cfg);
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) {
    fail(ErrorKind::kArgument, "test_fraction must lie in [0, 1)");
  }
  if (cfg.test_fraction == 0.0) return {std::move(ds), LabeledDataset{}};
  return stage("data", [&] { return split(ds, cfg.test_fraction, cfg.seed); });
}

Grouping group_samples(const DataMatrix& raw, const RunConfig& cfg) {
  Grouping g;
  stage("data", [&] {
    raw.validate();
    g.normalization = fit_normalization(raw, parse_normalization(cfg.normalization));
    g.x = g.normalization.apply(raw);
  });
  g.feature = stage("decision_feature",
                    [&] { return fit_decision_feature(g.x, cfg.feature_params()); });
  g.partition = stage("hyperclass", [&] {
    const Vector row = g.x.values.row(g.feature.choice.index).transpose();
    return partition(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                     cfg.clusters);
  });
  return g;
}

TrainedModel fit_hash(const Grouping& g, const RunConfig& cfg) {
  const HashParams hp = cfg.hash_params();
  TrainedModel t;
  t.train = stage("hash_train", [&] { return train(g.x, g.partition, hp, cfg.seed); });
  t.model.u = t.train.state.u;
  t.model.classes = g.partition.classes();
  t.model.hp = hp;
  t.model.varsigma = g.feature.state.varsigma;
  t.model.sigma = g.feature.state.sigma;
  t.model.gamma = g.feature.state.gamma;
  t.model.normalization = g.normalization;
  t.codes = stage("encode_index", [&] { return encode(g.x, t.model.u); });
  return t;
}

TrainedModel train_pipeline(const DataMatrix& raw, const RunConfig& cfg) {
  return fit_hash(group_samples(raw, cfg), cfg);
}

BinaryCodes encode_with(const ModelArtifact& model, const DataMatrix& raw) {
  return stage("encode_index", [&] {
    if (raw.dims() != model.dims()) {
      fail(ErrorKind::kStructural, "samples have d=" + std::to_string(raw.dims()) +
                                       " but the model expects d=" +
                                       std::to_string(model.dims()));
    }
    return encode(model.normalization.apply(raw), model.u);
  });
}

RelevanceJudgments judgments_for(const RunConfig& cfg, const LabeledDataset& db,
                                 const LabeledDataset& queries) {
  return stage("eval", [&] {
    if (cfg.relevance == "euclidean") {
      return euclidean_ground_truth(db.data, queries.data, cfg.euclidean_k);
    }
    if (!db.labels || !queries.labels) {
      fail(ErrorKind::kArgument,
           "class relevance needs labels on both database and queries; set "
           "relevance=euclidean (top euclidean_k neighbors) for unlabeled data");
    }
    return class_ground_truth(*db.labels, *queries.labels);
  });
}

MetricsReport evaluate_model(const ModelArtifact& model, const BinaryCodes& db_codes,
                             const LabeledDataset& db, const LabeledDataset& queries,
                             const RunConfig& cfg) {
  if (db_codes.n != db.data.samples()) {
    fail(ErrorKind::kStructural, "eval: codes file holds " + std::to_string(db_codes.n) +
                                     " codes but the database has " +
                                     std::to_string(db.data.samples()) + " samples");
  }
  const RelevanceJudgments j = judgments_for(cfg, db, queries);
  const BinaryCodes q = encode_with(model, queries.data);
  return stage("eval", [&] { return evaluate(db_codes, q, j, cfg.top_k); });
}

MetricsReport evaluate_random_projection(const LabeledDataset& db,
                                         const LabeledDataset& queries,
                                         const RunConfig& cfg) {
  const NormalizationParams norm =
      fit_normalization(db.data, parse_normalization(cfg.normalization));
  const Matrix p = gaussian_projection(cfg.bits, static_cast<int>(db.data.dims()), cfg.seed);
  const BinaryCodes db_codes = encode(norm.apply(db.data), p);
  const BinaryCodes q_codes = encode(norm.apply(queries.data), p);
  return evaluate(db_codes, q_codes, judgments_for(cfg, db, queries), cfg.top_k);
}

std::vector<double> default_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3}; }

std::vector<std::vector<SweepAxis>> default_sweep_families() {
  const auto grid = default_grid();
  return {
      {{"alpha", grid}, {"beta", grid}, {"lambda", {1.0}}, {"eta", {1.0}}},
      {{"lambda", grid}, {"eta", grid}, {"alpha", {1.0}}, {"beta", {1.0}}},
  };
}

std::vector<SweepCell> run_sweep(const RunConfig& cfg,
                                 const std::vector<std::vector<SweepAxis>>& families,
                                 int jobs) {
  std::vector<SweepCell> cells;
  bool regroup = false;
  for (const auto& family : families) {
    std::size_t count = 1;
    for (const auto& axis : family) {
      if (axis.values.empty()) fail(ErrorKind::kArgument, "sweep axis '" + axis.name + "' is empty");
      if (is_feature_param(axis.name)) regroup = true;
      count *= axis.values.size();
    }
    for (std::size_t c = 0; c < count; ++c) {
      SweepCell cell;
      std::size_t rest = c;
      // last axis varies fastest
      std::vector<std::pair<std::string, double>> params(family.size());
      for (std::size_t a = family.size(); a-- > 0;) {
        params[a] = {family[a].name, family[a].values[rest % family[a].values.size()]};
        rest /= family[a].values.size();
      }
      cell.params = std::move(params);
      cells.push_back(std::move(cell));
    }
  }
  if (cells.empty()) fail(ErrorKind::kArgument, "sweep grid is empty");

  const auto [train_side, test_side] = load_split(cfg);
  if (test_side.data.samples() == 0) fail(ErrorKind::kArgument, "sweep needs test_fraction > 0");
  std::optional<Grouping> shared;
  if (!regroup) shared = group_samples(train_side.data, cfg);

  const auto run_cell = [&](SweepCell& cell) {
    RunConfig local = cfg;
    cell.record.dataset = dataset_name(cfg);
    cell.record.seed = cfg.seed;
    cell.record.params = cell.params;
    try {
      for (const auto& [name, value] : cell.params) set_numeric(local, name, value);
      cell.record.bits = local.bits;
      const TrainedModel t = shared ? fit_hash(*shared, local)
                                    : train_pipeline(train_side.data, local);
      const MetricsReport r = evaluate_model(t.model, t.codes, train_side, test_side, local);
      cell.record.map = r.map;
      cell.record.ham2 = r.ham2;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.record.status = std::string("failed: ") + e.what();
    }
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return cells;
}

std::optional<std::size_t> best_cell(const std::vector<SweepCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].ok) continue;
    if (!best) {
      best = i;
      continue;
    }
    const SweepCell& b = cells[*best];
    if (cells[i].record.map > b.record.map ||
        (cells[i].record.map == b.record.map && cells[i].params < b.params)) {
      best = i;
    }
  }
  return best;
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto [train_side, test_side] = load_split(cfg);
  const Grouping g = group_samples(train_side.data, cfg);
  const TrainedModel t = fit_hash(g, cfg);
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path out(cfg.out);
  write_model(t.model, (out / "model.hch").string());
  write_codes(t.codes, (out / "codes.hcb").string());
  write_trace_csv(t.train.state.initial_objective, t.train.state.objective_trace,
                  (out / "trace.csv").string());
  write_partition_csv(g.partition, (out / "partition.csv").string());

  const auto& names = g.x.feature_names;
  const auto f = g.feature.choice.index;
  log << "decision feature: " << f;
  if (static_cast<std::size_t>(f) < names.size()) log << " (" << names[f] << ")";
  if (g.feature.choice.degenerate) log << " [all weights zero]";
  log << "\nhyper-classes: " << g.partition.classes();
  if (g.partition.reduced) log << " (reduced from " << g.partition.requested_classes << ")";
  log << "\niterations: " << t.train.iterations << (t.train.converged ? " (converged)" : "")
      << "\nfinal objective: " << std::setprecision(12)
      << (t.train.state.objective_trace.empty() ? t.train.state.initial_objective
                                                : t.train.state.objective_trace.back())
      << "\nwrote " << (out / "model.hch").string() << ", " << (out / "codes.hcb").string()
      << ", " << (out / "trace.csv").string() << "\n";
}

void cmd_encode(const RunConfig& cfg, const std::string& model_path,
                const std::string& codes_path, std::ostream& log) {
  const ModelArtifact model = read_model(model_path);
  const auto [train_side, test_side] = load_split(cfg);
  const BinaryCodes codes = encode_with(model, train_side.data);
  write_codes(codes, codes_path);
  log << "encoded " << codes.n << " samples with " << codes.bits << " bits into " << codes_path
      << "\n";
}

void cmd_query(const RunConfig& cfg, const std::string& model_path,
               const std::string& codes_path, const std::string& queries_path,
               std::optional<int> top_k, std::ostream& out) {
  const ModelArtifact model = read_model(model_path);
  const BinaryCodes db = read_codes(codes_path);
  if (db.bits != model.bits()) {
    fail(ErrorKind::kStructural, "codes have " + std::to_string(db.bits) +
                                     " bits but the model produces " +
                                     std::to_string(model.bits()));
  }
  DataMatrix queries;
  if (queries_path.empty()) {
    queries = load_split(cfg).second.data;
    if (queries.samples() == 0) fail(ErrorKind::kArgument, "no queries: pass --queries or set test_fraction");
  } else {
    RunConfig qc = cfg;
    qc.dataset = queries_path;
    if (qc.format == "synth") fail(ErrorKind::kArgument, "--queries needs a file format");
    queries = stage("data", [&] {
      LoadOptions opts;
      opts.csv_label_column = cfg.label_column;
      return load_dataset(queries_path, parse_data_format(qc.format), opts).data;
    });
  }
  const BinaryCodes q = encode_with(model, queries);
  const HammingIndex index = build_index(db);
  out << "query_id,result_id,distance\n";
  for (int i = 0; i < q.n; ++i) {
    const std::vector<int> ids =
        top_k ? query_topk(db, q.code(i), std::min(*top_k, db.n)) : query_radius(index, q.code(i), 2);
    for (int id : ids) {
      out << i << ',' << id << ',' << hamming_distance(q.code(i), db.code(id)) << '\n';
    }
  }
}

void cmd_eval(const RunConfig& cfg, const std::string& model_path,
              const std::string& codes_path, std::ostream& log) {
  const ModelArtifact model = read_model(model_path);
  const BinaryCodes db = read_codes(codes_path);
  const auto [train_side, test_side] = load_split(cfg);
  if (test_side.data.samples() == 0) fail(ErrorKind::kArgument, "eval needs test_fraction > 0");
  const MetricsReport r = evaluate_model(model, db, train_side, test_side, cfg);

  MetricsRecord rec;
  rec.dataset = dataset_name(cfg);
  rec.bits = r.bits;
  rec.seed = cfg.seed;
  rec.map = r.map;
  rec.ham2 = r.ham2;
  rec.params = {{"alpha", model.hp.alpha},
                {"beta", model.hp.beta},
                {"lambda", model.hp.lambda},
                {"eta", model.hp.eta}};
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path out(cfg.out);
  append_metrics_jsonl(rec, (out / "metrics.jsonl").string());
  write_pr_csv(r.pr_curve, (out / ("pr_" + std::to_string(r.bits) + ".csv")).string());
  log << std::setprecision(6) << "map: " << r.map << "\nham2: " << r.ham2
      << "\nqueries: " << r.ap.size() << " (skipped " << r.skipped << ")\n";
}

void cmd_sweep(const RunConfig& cfg, const std::vector<std::vector<SweepAxis>>& families,
               int jobs, std::ostream& log) {
  const std::vector<SweepCell> cells = run_sweep(cfg, families, jobs);
  std::filesystem::create_directories(cfg.out);
  const std::string path = (std::filesystem::path(cfg.out) / "sweep.jsonl").string();
  std::ofstream(path, std::ios::trunc).close();
  int failed = 0;
  for (const auto& c : cells) {
    append_metrics_jsonl(c.record, path);
    if (!c.ok) ++failed;
  }
  log << "cells: " << cells.size() << " (failed " << failed << ")\nwrote " << path << "\n";
  if (const auto best = best_cell(cells)) {
    log << "best:";
    for (const auto& [name, value] : cells[*best].params) log << ' ' << name << '=' << value;
    log << std::setprecision(6) << " map=" << cells[*best].record.map
        << " ham2=" << cells[*best].record.ham2 << "\n";
  } else {
    log << "best: none (every cell failed)\n";
  }
}

void cmd_report(const std::string& metrics_path, std::ostream& out) {
  std::ifstream is(metrics_path);
  if (!is) fail(ErrorKind::kArgument, "cannot open " + metrics_path);
  std::string line;
  int number = 0;
  std::optional<std::pair<double, std::string>> best;
  out << std::left << std::setw(14) << "dataset" << std::setw(6) << "bits" << std::setw(8)
      << "seed" << std::setw(10) << "map" << std::setw(10) << "ham2" << "params\n";
  while (std::getline(is, line)) {
    ++number;
    if (trim(line).empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, metrics_path + ":" + std::to_string(number) + ": " + e.what());
    }
    std::string params;
    for (const auto& [key, value] : j.items()) {
      if (key == "dataset" || key == "bits" || key == "seed" || key == "map" || key == "ham2" ||
          key == "status") {
        continue;
      }
      params += key + "=" + value.dump() + " ";
    }
    const std::string status = j.value("status", "ok");
    if (status != "ok") params += "[" + status + "]";
    const double map = j.value("map", 0.0);
    out << std::setw(14) << j.value("dataset", "") << std::setw(6) << j.value("bits", 0)
        << std::setw(8) << j.value("seed", 0ULL) << std::setw(10) << std::setprecision(4)
        << map << std::setw(10) << j.value("ham2", 0.0) << params << "\n";
    if (status == "ok" && (!best || map > best->first)) best = {map, "line " + std::to_string(number)};
  }
  if (best) out << "best map " << best->first << " at " << best->second << "\n";
}

}  // namespace hch
