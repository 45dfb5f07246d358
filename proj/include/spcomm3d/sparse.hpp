#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace spc3d {

using Index = std::int64_t;

struct Entry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Coordinate-form sparse matrix. Entries are unique per (row, col); when
/// `sorted()` holds they are in row-major order.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(Index nrows, Index ncols);
  /// Validates bounds and uniqueness, then sorts row-major.
  SparseMatrix(Index nrows, Index ncols, std::vector<Entry> entries);

  Index nrows() const noexcept { return nrows_; }
  Index ncols() const noexcept { return ncols_; }
  Index nnz() const noexcept { return static_cast<Index>(entries_.size()); }
  bool sorted() const noexcept { return sorted_; }
  std::span<const Entry> entries() const noexcept { return entries_; }

  /// Appends without sorting; clears the sorted flag unless the order is kept.
  void push_back(const Entry& e);
  void sort();

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
  Index nrows_ = 0;
  Index ncols_ = 0;
  std::vector<Entry> entries_;
  bool sorted_ = true;
};

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(Index nrows, Index ncols, double fill = 0.0);
  DenseMatrix(Index nrows, Index ncols, std::vector<double> values);

  Index nrows() const noexcept { return nrows_; }
  Index ncols() const noexcept { return ncols_; }

  std::span<double> row(Index i) { return {values_.data() + i * ncols_, static_cast<std::size_t>(ncols_)}; }
  std::span<const double> row(Index i) const {
    return {values_.data() + i * ncols_, static_cast<std::size_t>(ncols_)};
  }
  double& operator()(Index i, Index k) { return values_[static_cast<std::size_t>(i * ncols_ + k)]; }
  double operator()(Index i, Index k) const { return values_[static_cast<std::size_t>(i * ncols_ + k)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
  Index nrows_ = 0;
  Index ncols_ = 0;
  std::vector<double> values_;
};

/// Coordinate Matrix Market reader (real, integer or pattern; general or
/// symmetric). Duplicates are summed and the result is sorted.
SparseMatrix load_matrix_market(const std::filesystem::path& path);
SparseMatrix parse_matrix_market(std::string_view text);

/// RMAT generator with (a, b, c, d) = (0.57, 0.19, 0.19, 0.05). Draws
/// `nnz_target` edges and drops duplicates, so nnz <= nnz_target.
SparseMatrix gen_rmat(int scale, Index nnz_target, std::uint64_t seed);

/// Uniformly scattered pattern with exactly `nnz` distinct entries.
SparseMatrix gen_uniform(Index nrows, Index ncols, Index nnz, std::uint64_t seed);

/// Fully dense pattern, values drawn from `seed`.
SparseMatrix gen_dense_pattern(Index nrows, Index ncols, std::uint64_t seed);

DenseMatrix random_dense(Index nrows, Index ncols, std::uint64_t seed);

/// c_ij = s_ij * <a_i, b_j>, k ascending. Output keeps the input entry order.
SparseMatrix sddmm_ref(const SparseMatrix& S, const DenseMatrix& A, const DenseMatrix& B);

/// a_i = sum_j s_ij * b_j with j ascending.
DenseMatrix spmm_ref(const SparseMatrix& S, const DenseMatrix& B);

}  // namespace spc3d
