#include "hch/model.hpp"

#include <cstdint>
#include <fstream>

#include "binary_io.hpp"
#include "hch/error.hpp"

namespace hch {
namespace {

constexpr std::uint32_t kVersion = 1;

std::uint32_t tag(Normalization s) {
  switch (s) {
    case Normalization::kNone: return 0;
    case Normalization::kZeroMean: return 1;
    case Normalization::kZscore: return 2;
  }
  return 0;
}

}  // namespace

void write_model(const ModelArtifact& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kArgument, "cannot open " + path + " for writing");
  io::put_magic(os, "HCH1");
  io::put_le<std::uint32_t>(os, kVersion);
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.bits()));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.dims()));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.classes));
  for (double v : {m.hp.alpha, m.hp.beta, m.hp.lambda, m.hp.eta, m.varsigma, m.sigma, m.gamma}) {
    io::put_le<double>(os, v);
  }
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.hp.knn_k));
  io::put_le<std::uint32_t>(os, tag(m.normalization.scheme));
  for (Eigen::Index r = 0; r < m.u.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.u.cols(); ++c) io::put_le<double>(os, m.u.u(r, c));
  }
  if (m.normalization.scheme != Normalization::kNone) {
    if (m.normalization.offset.size() != m.dims() || m.normalization.factor.size() != m.dims()) {
      fail(ErrorKind::kStructural, "normalization parameters do not match d");
    }
    for (Eigen::Index i = 0; i < m.dims(); ++i) io::put_le<double>(os, m.normalization.offset[i]);
    for (Eigen::Index i = 0; i < m.dims(); ++i) io::put_le<double>(os, m.normalization.factor[i]);
  }
  if (!os) fail(ErrorKind::kArgument, "write failed: " + path);
}

ModelArtifact read_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kArgument, "cannot open " + path);
  io::expect_magic(is, "HCH1", path);
  const auto u32 = [&](const char* what) { return io::get_le<std::uint32_t>(is, path + " " + what); };
  const auto f64 = [&](const char* what) { return io::get_le<double>(is, path + " " + what); };
  const std::uint32_t version = u32("version");
  if (version != kVersion) {
    fail(ErrorKind::kFormat, path + ": unsupported model version " + std::to_string(version));
  }
  ModelArtifact m;
  const std::uint32_t l = u32("l");
  const std::uint32_t d = u32("d");
  m.classes = static_cast<int>(u32("c"));
  if (l == 0 || d == 0 || l > d) fail(ErrorKind::kFormat, path + ": invalid shape");
  m.hp.alpha = f64("alpha");
  m.hp.beta = f64("beta");
  m.hp.lambda = f64("lambda");
  m.hp.eta = f64("eta");
  m.varsigma = f64("varsigma");
  m.sigma = f64("sigma");
  m.gamma = f64("gamma");
  m.hp.knn_k = static_cast<int>(u32("knn_k"));
  m.hp.bits = static_cast<int>(l);
  const std::uint32_t scheme = u32("normalization");
  if (scheme > 2) fail(ErrorKind::kFormat, path + ": unknown normalization tag");
  m.normalization.scheme = static_cast<Normalization>(scheme);
  m.u.u.resize(l, d);
  for (std::uint32_t r = 0; r < l; ++r) {
    for (std::uint32_t c = 0; c < d; ++c) m.u.u(r, c) = f64("U");
  }
  if (m.normalization.scheme != Normalization::kNone) {
    m.normalization.offset.resize(d);
    m.normalization.factor.resize(d);
    for (std::uint32_t i = 0; i < d; ++i) m.normalization.offset[i] = f64("offsets");
    for (std::uint32_t i = 0; i < d; ++i) m.normalization.factor[i] = f64("factors");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kFormat, path + ": trailing bytes after the model");
  }
  return m;
}

void write_trace_csv(double initial, const std::vector<double>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kArgument, "cannot open " + path + " for writing");
  os.precision(17);
  os << "iteration,objective\n0," << initial << '\n';
  for (std::size_t t = 0; t < trace.size(); ++t) os << t + 1 << ',' << trace[t] << '\n';
}

}  // namespace hch
