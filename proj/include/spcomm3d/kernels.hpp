#pragma once

// Per-rank compute phase. The kernels see only localized indices and the
// resolved dense rows; they know nothing about communication. Each kernel
// has an OpenMP version and a serial reference producing bitwise-identical
// output (every output element is accumulated by one thread in a fixed
// order).

#include <cstddef>
#include <span>
#include <vector>

#include "spcomm3d/comm_plan.hpp"
#include "spcomm3d/sparse.hpp"

namespace spc3d {

/// Local row/column index -> `width` words inside a DenseRowStore.
class LocalDense {
public:
  LocalDense() = default;
  /// Resolves every global id of `global_map`; throws PlanError for ids
  /// missing from the store. Invalidated by a later store relayout.
  LocalDense(DenseRowStore& store, std::span<const Index> global_map);

  std::size_t width() const noexcept { return width_; }
  std::size_t rows() const noexcept { return offsets_.size(); }
  const double* row(Index local) const noexcept { return base_ + offsets_[static_cast<std::size_t>(local)]; }
  double* row(Index local) noexcept { return base_ + offsets_[static_cast<std::size_t>(local)]; }

private:
  double* base_ = nullptr;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

/// CSR-style row starts of a row-major sorted local matrix (nrows + 1).
std::vector<Index> row_pointers(const SparseMatrix& local);

/// partial[e] = s_e * <a-chunk, b-chunk>, in entry order. `threads` <= 0
/// uses the OpenMP default.
std::vector<double> local_sddmm(const SparseMatrix& local, const LocalDense& a, const LocalDense& b,
                                int threads = 1);
std::vector<double> local_sddmm_serial(const SparseMatrix& local, const LocalDense& a, const LocalDense& b);

/// out row i = sum over the row's entries of s_ij * b_j, columns ascending.
/// Every local row of `local` is overwritten.
void local_spmm(const SparseMatrix& local, std::span<const Index> row_ptr, const LocalDense& b, LocalDense& out,
                int threads = 1);
void local_spmm_serial(const SparseMatrix& local, std::span<const Index> row_ptr, const LocalDense& b,
                       LocalDense& out);

}  // namespace spc3d
