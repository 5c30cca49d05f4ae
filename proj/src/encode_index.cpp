#include "hch/encode_index.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "hch/error.hpp"

namespace hch {
namespace {

void set_bit(std::vector<std::uint64_t>& words, std::size_t base, int j) {
  words[base + j / 64] |= std::uint64_t{1} << (j % 64);
}

BinaryCodes sign_codes(const Matrix& proj) {
  // proj is l x n
  BinaryCodes out;
  out.n = static_cast<int>(proj.cols());
  out.bits = static_cast<int>(proj.rows());
  const int wpc = out.words_per_code();
  out.words.assign(static_cast<std::size_t>(out.n) * wpc, 0);
  for (int i = 0; i < out.n; ++i) {
    for (int j = 0; j < out.bits; ++j) {
      if (proj(j, i) >= 0.0) set_bit(out.words, static_cast<std::size_t>(i) * wpc, j);
    }
  }
  return out;
}

}  // namespace

CodeView BinaryCodes::code(int i) const {
  if (i < 0 || i >= n) fail(ErrorKind::kIndex, "code index " + std::to_string(i) + " out of range");
  const auto wpc = static_cast<std::size_t>(words_per_code());
  return CodeView(words.data() + static_cast<std::size_t>(i) * wpc, wpc);
}

bool BinaryCodes::bit(int i, int j) const {
  return (code(i)[j / 64] >> (j % 64)) & 1U;
}

BinaryCodes pack(const Matrix& signs) { return sign_codes(signs.transpose()); }

Matrix unpack(const BinaryCodes& codes) {
  Matrix out(codes.n, codes.bits);
  for (int i = 0; i < codes.n; ++i) {
    for (int j = 0; j < codes.bits; ++j) out(i, j) = codes.bit(i, j) ? 1.0 : -1.0;
  }
  return out;
}

BinaryCodes encode(const DataMatrix& x, const Matrix& projection) {
  if (projection.cols() != x.dims()) {
    fail(ErrorKind::kArgument, "encode: samples have d=" + std::to_string(x.dims()) +
                                   " but the projection expects d=" +
                                   std::to_string(projection.cols()));
  }
  return sign_codes(projection * x.values);
}

BinaryCodes encode(const DataMatrix& x, const OrthonormalFrame& u) { return encode(x, u.u); }

BinaryCodes encode(const Vector& sample, const OrthonormalFrame& u) {
  DataMatrix x;
  x.values = sample;
  return encode(x, u.u);
}

Matrix gaussian_projection(int l, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix p(l, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = 0; r < l; ++r) p(r, c) = normal(rng);
  }
  return p;
}

int hamming_distance(CodeView a, CodeView b) {
  if (a.size() != b.size()) fail(ErrorKind::kArgument, "hamming_distance: code lengths differ");
  int d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
  return d;
}

std::size_t CodeHash::operator()(const std::vector<std::uint64_t>& key) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint64_t w : key) {
    h ^= w + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

HammingIndex build_index(BinaryCodes codes) {
  HammingIndex index;
  index.codes = std::move(codes);
  for (int i = 0; i < index.codes.n; ++i) {
    const CodeView c = index.codes.code(i);
    index.buckets[std::vector<std::uint64_t>(c.begin(), c.end())].push_back(i);
  }
  return index;
}

std::vector<int> query_radius(const HammingIndex& index, CodeView q, int r) {
  if (r < 0) fail(ErrorKind::kArgument, "query_radius: r must be >= 0");
  const BinaryCodes& codes = index.codes;
  if (static_cast<int>(q.size()) != codes.words_per_code()) {
    fail(ErrorKind::kArgument, "query_radius: query length differs from the index");
  }
  const long long l = codes.bits;
  std::vector<std::pair<int, int>> hits;  // (distance, id)

  if (r <= 2 && l + l * (l - 1) / 2 <= codes.n) {
    std::vector<std::uint64_t> key(q.begin(), q.end());
    const auto probe = [&](int dist) {
      const auto it = index.buckets.find(key);
      if (it == index.buckets.end()) return;
      for (int id : it->second) hits.emplace_back(dist, id);
    };
    const auto flip = [&](int j) { key[j / 64] ^= std::uint64_t{1} << (j % 64); };
    probe(0);
    for (int a = 0; r >= 1 && a < l; ++a) {
      flip(a);
      probe(1);
      for (int b = a + 1; r >= 2 && b < l; ++b) {
        flip(b);
        probe(2);
        flip(b);
      }
      flip(a);
    }
  } else {
    for (int i = 0; i < codes.n; ++i) {
      const int dist = hamming_distance(codes.code(i), q);
      if (dist <= r) hits.emplace_back(dist, i);
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<int> ids;
  ids.reserve(hits.size());
  for (const auto& h : hits) ids.push_back(h.second);
  return ids;
}

std::vector<int> query_topk(const BinaryCodes& codes, CodeView q, int k) {
  if (k < 1 || k > codes.n) {
    fail(ErrorKind::kArgument, "query_topk: K must lie in [1, " + std::to_string(codes.n) + "]");
  }
  if (static_cast<int>(q.size()) != codes.words_per_code()) {
    fail(ErrorKind::kArgument, "query_topk: query length differs from the codes");
  }
  std::vector<std::vector<int>> by_distance(static_cast<std::size_t>(codes.bits) + 1);
  for (int i = 0; i < codes.n; ++i) by_distance[hamming_distance(codes.code(i), q)].push_back(i);
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(k));
  for (const auto& bucket : by_distance) {
    for (int id : bucket) {
      if (static_cast<int>(ids.size()) == k) return ids;
      ids.push_back(id);
    }
  }
  return ids;
}

void write_codes(const BinaryCodes& codes, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kArgument, "cannot open " + path + " for writing");
  io::put_magic(os, "HCB1");
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(codes.n));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(codes.bits));
  for (std::uint64_t w : codes.words) io::put_le<std::uint64_t>(os, w);
  if (!os) fail(ErrorKind::kArgument, "write failed: " + path);
}

BinaryCodes read_codes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kArgument, "cannot open " + path);
  io::expect_magic(is, "HCB1", path);
  BinaryCodes codes;
  codes.n = static_cast<int>(io::get_le<std::uint32_t>(is, path + " header"));
  codes.bits = static_cast<int>(io::get_le<std::uint32_t>(is, path + " header"));
  if (codes.bits < 1) fail(ErrorKind::kFormat, path + ": code length must be >= 1");
  const std::size_t count = static_cast<std::size_t>(codes.n) * codes.words_per_code();
  codes.words.resize(count);
  for (auto& w : codes.words) w = io::get_le<std::uint64_t>(is, path + " code words");
  if (is.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kFormat, path + ": trailing bytes after the last code");
  }
  if (codes.bits % 64 != 0) {
    const std::uint64_t pad = ~std::uint64_t{0} << (codes.bits % 64);
    const int wpc = codes.words_per_code();
    for (int i = 0; i < codes.n; ++i) {
      if (codes.words[static_cast<std::size_t>(i) * wpc + wpc - 1] & pad) {
        fail(ErrorKind::kFormat, path + ": nonzero padding bits in code " + std::to_string(i));
      }
    }
  }
  return codes;
}

}  // namespace hch
