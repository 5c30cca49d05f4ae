#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hch/data.hpp"
#include "hch/stiefel.hpp"

namespace hch {

using CodeView = std::span<const std::uint64_t>;

/// n codes of `bits` bits. Bit j of code i lives in word i*wpc + j/64 at
/// position j%64; a set bit means +1. Padding bits are zero.
struct BinaryCodes {
  int n = 0;
  int bits = 0;
  std::vector<std::uint64_t> words;

  int words_per_code() const { return (bits + 63) / 64; }
  CodeView code(int i) const;
  bool bit(int i, int j) const;
};

/// Rows of `signs` are codes; entries >= 0 map to +1.
BinaryCodes pack(const Matrix& signs);
/// n x bits matrix of +1/-1.
Matrix unpack(const BinaryCodes& codes);

/// sgn(U x) for each column of x, with sgn(0) = +1.
BinaryCodes encode(const DataMatrix& x, const Matrix& projection);
BinaryCodes encode(const DataMatrix& x, const OrthonormalFrame& u);
BinaryCodes encode(const Vector& sample, const OrthonormalFrame& u);

/// Seeded l x d matrix of independent N(0, 1) entries.
Matrix gaussian_projection(int l, int d, std::uint64_t seed);

int hamming_distance(CodeView a, CodeView b);

struct CodeHash {
  std::size_t operator()(const std::vector<std::uint64_t>& key) const noexcept;
};

struct HammingIndex {
  BinaryCodes codes;
  std::unordered_map<std::vector<std::uint64_t>, std::vector<int>, CodeHash> buckets;
};

HammingIndex build_index(BinaryCodes codes);

/// Ids within Hamming distance r of q, sorted by (distance, id). Probes
/// buckets over all flips when r <= 2 and l + l(l-1)/2 <= n, else scans.
std::vector<int> query_radius(const HammingIndex& index, CodeView q, int r);

/// K nearest ids, ascending distance, ties by ascending id.
std::vector<int> query_topk(const BinaryCodes& codes, CodeView q, int k);

/// "HCB1" | u32 n | u32 l | packed words, little-endian.
void write_codes(const BinaryCodes& codes, const std::string& path);
BinaryCodes read_codes(const std::string& path);

}  // namespace hch
