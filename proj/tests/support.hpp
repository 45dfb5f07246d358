#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spcomm3d/sparse.hpp"

namespace spc3d::testing {

/// Largest per-element relative error |got - want| / |want|. An element
/// whose reference is exactly zero must come out exactly zero.
inline double max_rel_error(std::span<const double> got, std::span<const double> want) {
  if (got.size() != want.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    const double d = std::abs(got[k] - want[k]);
    if (want[k] == 0.0) {
      if (d != 0.0) return INFINITY;
      continue;
    }
    worst = std::max(worst, d / std::abs(want[k]));
  }
  return worst;
}

inline std::vector<double> values_of(const SparseMatrix& S) {
  std::vector<double> v;
  for (const auto& e : S.entries()) v.push_back(e.value);
  return v;
}

inline bool same_pattern(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.nrows() != b.nrows() || a.ncols() != b.ncols() || a.nnz() != b.nnz()) return false;
  for (std::size_t k = 0; k < a.entries().size(); ++k)
    if (a.entries()[k].row != b.entries()[k].row || a.entries()[k].col != b.entries()[k].col) return false;
  return true;
}

}  // namespace spc3d::testing
