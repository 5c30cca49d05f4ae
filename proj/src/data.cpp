#include "hch/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "binary_io.hpp"
#include "hch/error.hpp"

namespace hch {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kArgument, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

void DataMatrix::validate() const {
  if (dims() < 2 || samples() < 2) {
    fail(ErrorKind::kStructural,
         "data matrix must have d >= 2 and n >= 2, got d=" +
             std::to_string(dims()) + " n=" + std::to_string(samples()));
  }
  if (!values.allFinite()) {
    fail(ErrorKind::kStructural, "data matrix contains NaN or Inf");
  }
  if (!feature_names.empty() &&
      feature_names.size() != static_cast<std::size_t>(dims())) {
    fail(ErrorKind::kStructural, "feature_names length differs from d");
  }
}

DataFormat parse_data_format(const std::string& name) {
  if (name == "csv") return DataFormat::kCsv;
  if (name == "idx_ubyte" || name == "idx") return DataFormat::kIdxUbyte;
  if (name == "raw_f64" || name == "raw") return DataFormat::kRawF64;
  fail(ErrorKind::kArgument, "unknown data format '" + name + "'");
}

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::kNone;
  if (name == "zero_mean") return Normalization::kZeroMean;
  if (name == "zscore") return Normalization::kZscore;
  fail(ErrorKind::kArgument, "unknown normalization '" + name + "'");
}

std::string to_string(Normalization scheme) {
  switch (scheme) {
    case Normalization::kNone: return "none";
    case Normalization::kZeroMean: return "zero_mean";
    case Normalization::kZscore: return "zscore";
  }
  return "none";
}

LabeledDataset parse_csv(const std::string& text, bool label_column) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> header;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first_content_line = true;

  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line = trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    const auto fields = split_fields(line);
    std::vector<double> parsed(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k) {
      numeric = parse_double(fields[k], parsed[k]);
    }
    if (first_content_line && !numeric) {
      first_content_line = false;
      for (auto f : fields) header.emplace_back(f);
      width = fields.size();
      continue;
    }
    first_content_line = false;
    if (!numeric) {
      for (std::size_t k = 0; k < fields.size(); ++k) {
        double tmp;
        if (!parse_double(fields[k], tmp)) {
          fail(ErrorKind::kParse, "csv line " + std::to_string(line_no) +
                                      ", field " + std::to_string(k + 1) +
                                      ": not a number: '" +
                                      std::string(fields[k]) + "'");
        }
      }
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      fail(ErrorKind::kStructural,
           "csv line " + std::to_string(line_no) + " has " +
               std::to_string(fields.size()) + " fields, expected " +
               std::to_string(width));
    }
    if (label_column) {
      const double lab = parsed.back();
      if (lab < 0 || lab != std::floor(lab)) {
        fail(ErrorKind::kParse, "csv line " + std::to_string(line_no) +
                                    ": label must be a nonnegative integer");
      }
      labels.push_back(static_cast<int>(lab));
      parsed.pop_back();
    }
    rows.push_back(std::move(parsed));
  }

  if (rows.empty()) fail(ErrorKind::kStructural, "csv contains no data rows");
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  if (d == 0) fail(ErrorKind::kStructural, "csv rows contain no features");

  LabeledDataset ds;
  ds.data.values.resize(d, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) ds.data.values(i, j) = rows[j][i];
  }
  if (!header.empty()) {
    if (label_column) header.pop_back();
    ds.data.feature_names = std::move(header);
  }
  if (label_column) ds.labels = std::move(labels);
  return ds;
}

namespace {

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::string bytes;
  std::size_t payload;
};

IdxFile read_idx(const std::string& path) {
  IdxFile f;
  f.bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(f.bytes.data());
  if (f.bytes.size() < 4) fail(ErrorKind::kStructural, path + ": empty idx file");
  if (p[0] != 0 || p[1] != 0) fail(ErrorKind::kFormat, path + ": bad idx magic");
  if (p[2] != 0x08) {
    fail(ErrorKind::kFormat, path + ": only unsigned-byte idx files are supported");
  }
  const int ndims = p[3];
  if (ndims < 1) fail(ErrorKind::kFormat, path + ": idx file declares no dimensions");
  if (f.bytes.size() < 4 + 4 * static_cast<std::size_t>(ndims)) {
    fail(ErrorKind::kParse, path + ": truncated idx header");
  }
  std::size_t total = 1;
  for (int k = 0; k < ndims; ++k) {
    f.dims.push_back(io::get_be_u32(p + 4 + 4 * k));
    total *= f.dims.back();
  }
  f.payload = 4 + 4 * static_cast<std::size_t>(ndims);
  if (f.bytes.size() - f.payload != total) {
    fail(ErrorKind::kParse, path + ": idx payload is " +
                                std::to_string(f.bytes.size() - f.payload) +
                                " bytes, header implies " + std::to_string(total));
  }
  return f;
}

LabeledDataset load_idx(const std::string& path) {
  const IdxFile f = read_idx(path);
  if (f.dims.size() < 2) {
    fail(ErrorKind::kStructural, path + ": sample idx file needs >= 2 dimensions");
  }
  const Eigen::Index n = f.dims[0];
  Eigen::Index d = 1;
  for (std::size_t k = 1; k < f.dims.size(); ++k) d *= f.dims[k];
  LabeledDataset ds;
  ds.data.values.resize(d, n);
  const auto* p = reinterpret_cast<const unsigned char*>(f.bytes.data()) + f.payload;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      ds.data.values(i, j) = p[j * d + i] / 255.0;
    }
  }
  return ds;
}

LabeledDataset load_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kArgument, "cannot open " + path);
  in.peek();
  if (in.eof()) fail(ErrorKind::kStructural, path + ": empty file");
  io::expect_magic(in, "HCD1", path);
  const auto d = io::get_le<std::uint32_t>(in, "d");
  const auto n = io::get_le<std::uint32_t>(in, "n");
  LabeledDataset ds;
  ds.data.values.resize(d, n);
  for (std::uint32_t j = 0; j < n; ++j) {
    for (std::uint32_t i = 0; i < d; ++i) {
      ds.data.values(i, j) = io::get_le<double>(in, "matrix entry");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kStructural, path + ": trailing bytes after matrix");
  }
  return ds;
}

}  // namespace

std::vector<int> load_idx_labels(const std::string& path) {
  const IdxFile f = read_idx(path);
  if (f.dims.size() != 1) {
    fail(ErrorKind::kStructural, path + ": label idx file must be 1-dimensional");
  }
  std::vector<int> labels(f.dims[0]);
  const auto* p = reinterpret_cast<const unsigned char*>(f.bytes.data()) + f.payload;
  for (std::size_t j = 0; j < labels.size(); ++j) labels[j] = p[j];
  return labels;
}

LabeledDataset load_dataset(const std::string& path, DataFormat format,
                            const LoadOptions& options) {
  LabeledDataset ds;
  switch (format) {
    case DataFormat::kCsv: {
      const std::string text = read_file(path);
      if (trim(text).empty()) fail(ErrorKind::kStructural, path + ": empty file");
      ds = parse_csv(text, options.csv_label_column);
      break;
    }
    case DataFormat::kIdxUbyte:
      ds = load_idx(path);
      if (options.idx_labels_path) ds.labels = load_idx_labels(*options.idx_labels_path);
      break;
    case DataFormat::kRawF64:
      ds = load_raw(path);
      break;
  }
  ds.data.validate();
  if (ds.labels && ds.labels->size() != static_cast<std::size_t>(ds.data.samples())) {
    fail(ErrorKind::kStructural, path + ": label count differs from sample count");
  }
  return ds;
}

void save_raw_f64(const DataMatrix& x, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kArgument, "cannot write " + path);
  io::put_magic(out, "HCD1");
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.dims()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.samples()));
  for (Eigen::Index j = 0; j < x.samples(); ++j) {
    for (Eigen::Index i = 0; i < x.dims(); ++i) io::put_le<double>(out, x.values(i, j));
  }
}

DataMatrix NormalizationParams::apply(const DataMatrix& x) const {
  if (scheme == Normalization::kNone) return x;
  DataMatrix out = x;
  out.values = ((x.values.colwise() - offset).array().colwise() * factor.array()).matrix();
  return out;
}

Vector NormalizationParams::apply(const Vector& sample) const {
  if (scheme == Normalization::kNone) return sample;
  return ((sample - offset).array() * factor.array()).matrix();
}

NormalizationParams fit_normalization(const DataMatrix& x, Normalization scheme) {
  NormalizationParams p;
  p.scheme = scheme;
  const auto d = x.dims();
  p.offset = Vector::Zero(d);
  p.factor = Vector::Ones(d);
  if (scheme == Normalization::kNone) return p;
  p.offset = x.values.rowwise().mean();
  if (scheme == Normalization::kZscore) {
    const Matrix centered = x.values.colwise() - p.offset;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double var = centered.row(i).squaredNorm() / static_cast<double>(x.samples());
      p.factor(i) = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
  }
  return p;
}

DataMatrix normalize(const DataMatrix& x, Normalization scheme) {
  return fit_normalization(x, scheme).apply(x);
}

LabeledDataset synth_blobs(int d, int n, int groups, double separation,
                           std::uint64_t seed, std::optional<int> planted_feature) {
  if (d < 1 || n < 1) fail(ErrorKind::kArgument, "synth_blobs needs d >= 1 and n >= 1");
  if (groups < 1 || n < groups) {
    fail(ErrorKind::kArgument, "synth_blobs needs 1 <= groups <= n");
  }
  const int planted = planted_feature.value_or(std::min(2, d - 1));
  if (planted < 0 || planted >= d) {
    fail(ErrorKind::kArgument, "planted feature index out of range");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledDataset ds;
  ds.data.values.resize(d, n);
  std::vector<int> labels(n);
  const double mid = 0.5 * (groups - 1);
  for (int j = 0; j < n; ++j) {
    const int g = j % groups;
    labels[j] = g + 1;
    for (int i = 0; i < d; ++i) ds.data.values(i, j) = noise(rng);
    ds.data.values(planted, j) += (g - mid) * separation;
  }
  ds.data.feature_names.reserve(d);
  for (int i = 0; i < d; ++i) ds.data.feature_names.push_back("f" + std::to_string(i));
  ds.labels = std::move(labels);
  return ds;
}

LabeledDataset select_columns(const LabeledDataset& ds,
                              const std::vector<Eigen::Index>& columns) {
  LabeledDataset out;
  out.data.feature_names = ds.data.feature_names;
  out.data.values.resize(ds.data.dims(), static_cast<Eigen::Index>(columns.size()));
  if (ds.labels) out.labels.emplace();
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out.data.values.col(static_cast<Eigen::Index>(k)) = ds.data.values.col(columns[k]);
    if (ds.labels) out.labels->push_back((*ds.labels)[columns[k]]);
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double test_fraction,
                                                std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    fail(ErrorKind::kArgument, "test_fraction must lie in (0, 1)");
  }
  const Eigen::Index n = ds.data.samples();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<Eigen::Index>(std::floor(n * test_fraction));
  std::vector<Eigen::Index> test(order.begin(), order.begin() + n_test);
  std::vector<Eigen::Index> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {select_columns(ds, train), select_columns(ds, test)};
}

}  // namespace hch
