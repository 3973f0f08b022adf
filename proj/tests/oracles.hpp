#pragma once

// Naive retrieval oracles working on unpacked +-1 codes.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "dsibh/labels.hpp"
#include "dsibh/numkit.hpp"

namespace oracle {

using dsibh::LabelMatrix;
using dsibh::numkit::Matrix;

inline std::size_t hamming(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) dot += a(i, k) * b(j, k);
  return static_cast<std::size_t>((static_cast<double>(a.cols()) - dot) / 2.0);
}

struct Ranked {
  std::vector<std::size_t> order;  // row indices into the database
  std::vector<std::size_t> dist;
};

inline Ranked rank(const Matrix& q, std::size_t qi, const Matrix& db, const std::vector<std::uint64_t>& ids) {
  Ranked r;
  r.order.resize(db.rows());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::vector<std::size_t> d(db.rows());
  for (std::size_t j = 0; j < db.rows(); ++j) d[j] = hamming(q, qi, db, j);
  std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    return d[a] != d[b] ? d[a] < d[b] : ids[a] < ids[b];
  });
  for (std::size_t j : r.order) r.dist.push_back(d[j]);
  return r;
}

inline bool shares(const LabelMatrix& a, std::size_t i, const LabelMatrix& b, std::size_t j) {
  for (std::size_t k = 0; k < a.cols(); ++k)
    if (a(i, k) && b(j, k)) return true;
  return false;
}

// AP over the top R of the ranking; queries with no relevant item in range are skipped.
inline std::optional<double> average_precision(const std::vector<bool>& rel, std::size_t radius) {
  double hits = 0.0, acc = 0.0;
  for (std::size_t r = 0; r < std::min(radius, rel.size()); ++r) {
    if (rel[r]) {
      hits += 1.0;
      acc += hits / static_cast<double>(r + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return acc / hits;
}

inline double map(const Matrix& q, const LabelMatrix& ql, const Matrix& db, const LabelMatrix& dl,
                  const std::vector<std::uint64_t>& ids, std::size_t radius) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const Ranked r = rank(q, i, db, ids);
    std::vector<bool> rel;
    for (std::size_t j : r.order) rel.push_back(shares(ql, i, dl, j));
    if (auto ap = average_precision(rel, radius)) {
      total += *ap;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace oracle
