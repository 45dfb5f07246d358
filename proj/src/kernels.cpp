#include "spcomm3d/kernels.hpp"

#include <algorithm>
#include <string>

#include <omp.h>

#include "spcomm3d/error.hpp"

namespace spc3d {

LocalDense::LocalDense(DenseRowStore& store, std::span<const Index> global_map)
    : base_(store.words().data()), width_(store.width()) {
  offsets_.reserve(global_map.size());
  for (Index g : global_map) {
    auto off = store.offset_of(g);
    if (!off) throw PlanError("compute needs id " + std::to_string(g) + " which is not resident");
    offsets_.push_back(*off);
  }
}

std::vector<Index> row_pointers(const SparseMatrix& local) {
  if (!local.sorted()) throw DimensionError("row_pointers needs a row-major sorted matrix");
  std::vector<Index> ptr(static_cast<std::size_t>(local.nrows() + 1), 0);
  for (const auto& e : local.entries()) ++ptr[static_cast<std::size_t>(e.row + 1)];
  for (std::size_t r = 1; r < ptr.size(); ++r) ptr[r] += ptr[r - 1];
  return ptr;
}

namespace {

void check_widths(const LocalDense& a, const LocalDense& b) {
  if (a.width() != b.width())
    throw DimensionError("dense widths differ: " + std::to_string(a.width()) + " vs " + std::to_string(b.width()));
}

inline double scaled_dot(const Entry& e, const LocalDense& a, const LocalDense& b, std::size_t w) {
  const double* ar = a.row(e.row);
  const double* br = b.row(e.col);
  double dot = 0.0;
  for (std::size_t k = 0; k < w; ++k) dot += ar[k] * br[k];
  return e.value * dot;
}

inline void spmm_row(std::span<const Entry> entries, Index begin, Index end, const LocalDense& b, double* dst,
                     std::size_t w) {
  std::fill(dst, dst + w, 0.0);
  for (Index k = begin; k < end; ++k) {
    const Entry& e = entries[static_cast<std::size_t>(k)];
    const double* br = b.row(e.col);
    for (std::size_t c = 0; c < w; ++c) dst[c] += e.value * br[c];
  }
}

}  // namespace

std::vector<double> local_sddmm(const SparseMatrix& local, const LocalDense& a, const LocalDense& b, int threads) {
  check_widths(a, b);
  const auto entries = local.entries();
  const auto n = static_cast<std::int64_t>(entries.size());
  const std::size_t w = a.width();
  std::vector<double> out(entries.size());
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (std::int64_t e = 0; e < n; ++e) out[static_cast<std::size_t>(e)] = scaled_dot(entries[static_cast<std::size_t>(e)], a, b, w);
  return out;
}

std::vector<double> local_sddmm_serial(const SparseMatrix& local, const LocalDense& a, const LocalDense& b) {
  check_widths(a, b);
  std::vector<double> out;
  out.reserve(local.entries().size());
  for (const auto& e : local.entries()) out.push_back(scaled_dot(e, a, b, a.width()));
  return out;
}

void local_spmm(const SparseMatrix& local, std::span<const Index> row_ptr, const LocalDense& b, LocalDense& out,
                int threads) {
  check_widths(b, out);
  const auto entries = local.entries();
  const auto rows = static_cast<std::int64_t>(row_ptr.size()) - 1;
  const std::size_t w = b.width();
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 64) num_threads(nt) if (nt > 1)
  for (std::int64_t r = 0; r < rows; ++r)
    spmm_row(entries, row_ptr[static_cast<std::size_t>(r)], row_ptr[static_cast<std::size_t>(r + 1)], b, out.row(r), w);
}

void local_spmm_serial(const SparseMatrix& local, std::span<const Index> row_ptr, const LocalDense& b,
                       LocalDense& out) {
  check_widths(b, out);
  const auto rows = static_cast<Index>(row_ptr.size()) - 1;
  for (Index r = 0; r < rows; ++r)
    spmm_row(local.entries(), row_ptr[static_cast<std::size_t>(r)], row_ptr[static_cast<std::size_t>(r + 1)], b,
             out.row(r), b.width());
}

}  // namespace spc3d
