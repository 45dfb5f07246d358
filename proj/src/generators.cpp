#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

#include "spcomm3d/error.hpp"
#include "spcomm3d/hash.hpp"
#include "spcomm3d/sparse.hpp"

namespace spc3d {

namespace {

// 53-bit uniform in [0, 1). mt19937_64 output is fully specified by the
// standard, unlike the distribution adaptors.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double value_from(std::mt19937_64& rng) { return 0.5 + unit(rng); }

SparseMatrix from_linear(Index nrows, Index ncols, std::vector<Index> cells, std::mt19937_64& rng) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::vector<Entry> entries;
  entries.reserve(cells.size());
  for (Index c : cells) entries.push_back({c / ncols, c % ncols, value_from(rng)});
  return SparseMatrix(nrows, ncols, std::move(entries));
}

}  // namespace

SparseMatrix gen_rmat(int scale, Index nnz_target, std::uint64_t seed) {
  if (scale < 2 || scale > 30) throw ConfigError("rmat scale must be in [2, 30], got " + std::to_string(scale));
  const Index n = Index{1} << scale;
  if (nnz_target < 0 || nnz_target > n * n)
    throw ConfigError("rmat nnz_target " + std::to_string(nnz_target) + " exceeds " + std::to_string(n * n) +
                      " cells");
  constexpr double a = 0.57, b = 0.19, c = 0.19;
  std::mt19937_64 rng(mix64(seed, 0x524d4154));
  std::vector<Index> cells;
  cells.reserve(static_cast<std::size_t>(nnz_target));
  for (Index e = 0; e < nnz_target; ++e) {
    Index row = 0, col = 0;
    for (int level = 0; level < scale; ++level) {
      const double u = unit(rng);
      row <<= 1;
      col <<= 1;
      if (u < a) {
      } else if (u < a + b) {
        col |= 1;
      } else if (u < a + b + c) {
        row |= 1;
      } else {
        row |= 1;
        col |= 1;
      }
    }
    cells.push_back(row * n + col);
  }
  return from_linear(n, n, std::move(cells), rng);
}

SparseMatrix gen_uniform(Index nrows, Index ncols, Index nnz, std::uint64_t seed) {
  if (nrows < 0 || ncols < 0) throw ConfigError("negative dimension");
  const Index cells = nrows * ncols;
  if (nnz < 0 || nnz > cells)
    throw ConfigError("uniform nnz " + std::to_string(nnz) + " exceeds " + std::to_string(cells) + " cells");
  std::mt19937_64 rng(mix64(seed, 0x554e4946));
  std::vector<Index> picked;
  picked.reserve(static_cast<std::size_t>(nnz));
  if (nnz * 4 > cells) {
    std::vector<Index> all(static_cast<std::size_t>(cells));
    std::iota(all.begin(), all.end(), Index{0});
    // Partial Fisher-Yates.
    for (Index i = 0; i < nnz; ++i) {
      const Index j = i + static_cast<Index>(rng() % static_cast<std::uint64_t>(cells - i));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
      picked.push_back(all[static_cast<std::size_t>(i)]);
    }
  } else {
    std::unordered_set<Index> seen;
    while (static_cast<Index>(picked.size()) < nnz) {
      const Index cell = static_cast<Index>(rng() % static_cast<std::uint64_t>(cells));
      if (seen.insert(cell).second) picked.push_back(cell);
    }
  }
  return from_linear(nrows, ncols, std::move(picked), rng);
}

SparseMatrix gen_dense_pattern(Index nrows, Index ncols, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, 0x44454e53));
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(nrows * ncols));
  for (Index i = 0; i < nrows; ++i)
    for (Index j = 0; j < ncols; ++j) entries.push_back({i, j, value_from(rng)});
  return SparseMatrix(nrows, ncols, std::move(entries));
}

DenseMatrix random_dense(Index nrows, Index ncols, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, 0x4d415452));
  DenseMatrix m(nrows, ncols);
  for (double& v : m.values()) v = 2.0 * unit(rng) - 1.0;
  return m;
}

}  // namespace spc3d
