#include "spcomm3d/sparse.hpp"

#include <algorithm>
#include <string>

#include "spcomm3d/error.hpp"

namespace spc3d {

namespace {

bool row_major_less(const Entry& a, const Entry& b) {
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

void check_entry(const Entry& e, Index nrows, Index ncols) {
  if (e.row < 0 || e.row >= nrows || e.col < 0 || e.col >= ncols)
    throw DimensionError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                         ") outside " + std::to_string(nrows) + "x" + std::to_string(ncols));
}

}  // namespace

SparseMatrix::SparseMatrix(Index nrows, Index ncols) : nrows_(nrows), ncols_(ncols) {
  if (nrows < 0 || ncols < 0) throw DimensionError("negative matrix dimension");
}

SparseMatrix::SparseMatrix(Index nrows, Index ncols, std::vector<Entry> entries)
    : SparseMatrix(nrows, ncols) {
  for (const auto& e : entries) check_entry(e, nrows, ncols);
  entries_ = std::move(entries);
  sorted_ = false;
  sort();
  auto dup = std::adjacent_find(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.row == b.row && a.col == b.col;
  });
  if (dup != entries_.end())
    throw DimensionError("duplicate entry (" + std::to_string(dup->row) + "," + std::to_string(dup->col) + ")");
}

void SparseMatrix::push_back(const Entry& e) {
  check_entry(e, nrows_, ncols_);
  if (sorted_ && !entries_.empty() && !row_major_less(entries_.back(), e)) sorted_ = false;
  entries_.push_back(e);
}

void SparseMatrix::sort() {
  if (!sorted_) std::stable_sort(entries_.begin(), entries_.end(), row_major_less);
  sorted_ = true;
}

DenseMatrix::DenseMatrix(Index nrows, Index ncols, double fill)
    : nrows_(nrows), ncols_(ncols), values_(static_cast<std::size_t>(nrows * ncols), fill) {
  if (nrows < 0 || ncols < 0) throw DimensionError("negative matrix dimension");
}

DenseMatrix::DenseMatrix(Index nrows, Index ncols, std::vector<double> values)
    : nrows_(nrows), ncols_(ncols), values_(std::move(values)) {
  if (nrows < 0 || ncols < 0) throw DimensionError("negative matrix dimension");
  if (static_cast<Index>(values_.size()) != nrows * ncols)
    throw DimensionError("dense values length " + std::to_string(values_.size()) + " != " +
                         std::to_string(nrows) + "x" + std::to_string(ncols));
}

SparseMatrix sddmm_ref(const SparseMatrix& S, const DenseMatrix& A, const DenseMatrix& B) {
  if (A.nrows() != S.nrows() || B.nrows() != S.ncols() || A.ncols() != B.ncols() || A.ncols() < 1)
    throw DimensionError("sddmm: expected A " + std::to_string(S.nrows()) + "xK and B " +
                         std::to_string(S.ncols()) + "xK");
  const Index K = A.ncols();
  SparseMatrix C(S.nrows(), S.ncols());
  for (const auto& e : S.entries()) {
    auto a = A.row(e.row);
    auto b = B.row(e.col);
    double dot = 0.0;
    for (Index k = 0; k < K; ++k) dot += a[k] * b[k];
    C.push_back({e.row, e.col, e.value * dot});
  }
  return C;
}

DenseMatrix spmm_ref(const SparseMatrix& S, const DenseMatrix& B) {
  if (B.nrows() != S.ncols()) throw DimensionError("spmm: B must have " + std::to_string(S.ncols()) + " rows");
  const Index K = B.ncols();
  DenseMatrix A(S.nrows(), K);
  SparseMatrix sorted_copy;
  const SparseMatrix* src = &S;
  if (!S.sorted()) {
    sorted_copy = S;
    sorted_copy.sort();
    src = &sorted_copy;
  }
  for (const auto& e : src->entries()) {
    auto a = A.row(e.row);
    auto b = B.row(e.col);
    for (Index k = 0; k < K; ++k) a[k] += e.value * b[k];
  }
  return A;
}

}  // namespace spc3d
