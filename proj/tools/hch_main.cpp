// hch: train, encode, query, eval, sweep and report for hyper-class hashing.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hch/error.hpp"
#include "hch/pipeline.hpp"

namespace {

int exit_code(hch::ErrorKind kind) {
  switch (kind) {
    case hch::ErrorKind::kArgument:
    case hch::ErrorKind::kIndex:
      return 2;
    case hch::ErrorKind::kParse:
    case hch::ErrorKind::kStructural:
    case hch::ErrorKind::kFormat:
      return 3;
    case hch::ErrorKind::kNumerical:
      return 4;
  }
  return 1;
}

std::vector<double> parse_values(const std::string& name, const std::string& list) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos
                                                                           : comma - start);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      hch::fail(hch::ErrorKind::kArgument, "--axis " + name + ": bad value '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyper-class hashing"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
  int jobs = 1;

  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--jobs", jobs, "parallel sweep cells")->check(CLI::PositiveNumber);
  app.add_option("--set", sets, "extra key=value override (repeatable)");
  const std::vector<std::pair<std::string, std::string>> shared = {
      {"--seed", "seed"},       {"--out", "out"},           {"--bits", "bits"},
      {"--clusters", "clusters"}, {"--alpha", "alpha"},     {"--beta", "beta"},
      {"--lambda", "lambda"},   {"--eta", "eta"},           {"--varsigma", "varsigma"},
      {"--sigma", "sigma"},     {"--gamma", "gamma"},       {"--knn-k", "knn_k"},
      {"--dataset", "dataset"}, {"--format", "format"},     {"--normalization", "normalization"},
  };
  for (const auto& [flag, key] : shared) {
    const std::string k = key;
    app.add_option_function<std::string>(flag, [&overrides, k](const std::string& v) {
      overrides[k] = v;
    }, "overrides config key " + k);
  }

  std::string model;
  std::string codes;
  std::string queries;
  std::optional<int> top_k;
  std::vector<std::string> axes;
  std::string metrics;

  auto* train = app.add_subcommand("train", "fit a model; writes model, codes, trace and partition");
  auto* encode = app.add_subcommand("encode", "encode the training side with a stored model");
  encode->add_option("--model", model, "model file");
  encode->add_option("--codes-out", codes, "codes file to write");
  auto* query = app.add_subcommand("query", "radius-2 (default) or top-K retrieval");
  query->add_option("--model", model, "model file");
  query->add_option("--codes", codes, "database codes file");
  query->add_option("--queries", queries, "query samples (config format); default: held-out side");
  query->add_option("--topk", top_k, "K for top-K mode")->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("eval", "MAP, HAM2 and PR curve on the held-out side");
  eval->add_option("--model", model, "model file");
  eval->add_option("--codes", codes, "database codes file");
  auto* sweep = app.add_subcommand("sweep", "grid sweep over hyperparameters");
  sweep->add_option("--axis", axes, "name=v1,v2,... (repeatable); default: alpha x beta then lambda x eta");
  auto* report = app.add_subcommand("report", "summarize a metrics JSON-lines file");
  report->add_option("--metrics", metrics, "metrics file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  hch::RunConfig cfg;
  try {
    if (!config_path.empty()) hch::load_config_file(cfg, config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) hch::fail(hch::ErrorKind::kArgument, "--set expects key=value");
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [key, value] : overrides) hch::set_config_value(cfg, key, value);
    const std::filesystem::path out(cfg.out);
    if (model.empty()) model = (out / "model.hch").string();
    if (codes.empty()) codes = (out / "codes.hcb").string();
    if (metrics.empty()) metrics = (out / "metrics.jsonl").string();

    if (*train) {
      hch::cmd_train(cfg, std::cout);
    } else if (*encode) {
      hch::cmd_encode(cfg, model, codes, std::cout);
    } else if (*query) {
      hch::cmd_query(cfg, model, codes, queries, top_k, std::cout);
    } else if (*eval) {
      hch::cmd_eval(cfg, model, codes, std::cout);
    } else if (*sweep) {
      std::vector<std::vector<hch::SweepAxis>> families;
      if (axes.empty()) {
        families = hch::default_sweep_families();
      } else {
        families.emplace_back();
        for (const auto& a : axes) {
          const auto eq = a.find('=');
          if (eq == std::string::npos) hch::fail(hch::ErrorKind::kArgument, "--axis expects name=v1,v2");
          const std::string name = a.substr(0, eq);
          families.back().push_back({name, parse_values(name, a.substr(eq + 1))});
        }
      }
      hch::cmd_sweep(cfg, families, jobs, std::cout);
    } else if (*report) {
      hch::cmd_report(metrics, std::cout);
    }
  } catch (const hch::Error& e) {
    std::cerr << "error (" << hch::to_string(e.kind()) << "): " << e.what() << "\nconfig:";
    for (const auto& [key, value] : cfg.echo()) std::cerr << ' ' << key << '=' << value;
    std::cerr << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
