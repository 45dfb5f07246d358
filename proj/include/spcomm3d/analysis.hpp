#pragma once

// Sparsity-aware communication and memory accounting: lambda sets per
// fiber, need sets per rank, exact volumes, and the sparsity-agnostic
// 1D/2D/3D volume and memory formulas used as a baseline.

#include <cstdint>
#include <span>
#include <vector>

#include "spcomm3d/grid.hpp"
#include "spcomm3d/ownership.hpp"
#include "spcomm3d/sparse.hpp"

namespace spc3d {

/// For every id of one fiber's range, the fiber members (ascending) whose
/// block has at least one nonzero in that row/column.
struct FiberLambda {
  Range ids;
  int size = 0;
  std::vector<std::vector<int>> members;

  const std::vector<int>& lambda_set(Index id) const { return members[static_cast<std::size_t>(id - ids.begin)]; }
  int lambda(Index id) const { return static_cast<int>(lambda_set(id).size()); }
  /// Sum over ids of max(lambda - 1, 0).
  Index excess() const;
  /// histogram[l] = number of ids with lambda == l, l in [0, size].
  std::vector<Index> histogram() const;
};

/// Lambda sets of one z-slice: row fibers indexed by x, column fibers by y.
struct LambdaInfo {
  int z = 0;
  std::vector<FiberLambda> rows;
  std::vector<FiberLambda> cols;
};

FiberLambda fiber_lambda(std::span<const std::vector<Index>> used_per_member, Range ids);

/// Distinct row / column ids of a block, ascending.
std::vector<Index> used_rows(const SparseMatrix& block);
std::vector<Index> used_cols(const SparseMatrix& block);

/// `blocks` is the dist2d output (index x*Y + y) of the slice.
LambdaInfo compute_lambda(std::span<const SparseMatrix> blocks, const ProcGrid& grid, int z);

/// Words exchanged by all PreComm messages of one z-slice:
/// (K/Z) * (sum_i (lambda_i - 1) + sum_j (lambda_j - 1)).
std::int64_t total_sparse_volume(const LambdaInfo& lambda, Index K, int Z);

/// Owner maps of every row fiber (per x) and column fiber (per y).
struct FiberOwners {
  std::vector<OwnerMap> rows;
  std::vector<OwnerMap> cols;
};

/// Runs the serial owner assignment for every fiber of the slice.
FiberOwners assign_all_owners(const LambdaInfo& lambda, std::uint64_t seed);

/// Per global rank: ids used but not owned (I for rows of A, J for rows of B).
struct NeedSets {
  std::vector<std::vector<Index>> rows;
  std::vector<std::vector<Index>> cols;
};

/// Per global rank: number of owned A and B rows, including unused ids.
struct OwnedCounts {
  std::vector<Index> rows;
  std::vector<Index> cols;
};

NeedSets compute_need_sets(std::span<const SparseMatrix> blocks, const ProcGrid& grid, const FiberOwners& owners);
OwnedCounts owned_counts(const ProcGrid& grid, const FiberOwners& owners);

/// (K/Z) * (|I| + |J|) per rank.
std::vector<std::int64_t> per_rank_recv_volume(const NeedSets& need, Index K, int Z);
/// (K/Z) * (|I| + |J| + owned A rows + owned B rows) per rank.
std::vector<std::int64_t> sparse_memory(const NeedSets& need, const OwnedCounts& owned, Index K, int Z);

/// Exact non-negative fraction.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  /// Nearest integer, halves rounded up.
  std::int64_t words() const noexcept { return (2 * num + den) / (2 * den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

enum class AgnosticModel { one_d, two_d, three_d };

/// Per-processor receive volume of the sparsity-agnostic algorithms. 2D
/// needs a square P and 3D a square P/Z.
Rational agnostic_volume(AgnosticModel model, std::int64_t a_size, std::int64_t b_size, int P, int Z = 1);
/// Per-processor dense-matrix memory of the sparsity-agnostic algorithms.
Rational agnostic_memory(AgnosticModel model, std::int64_t a_size, std::int64_t b_size, int P, int Z = 1);

/// Everything predictable without running a kernel, in one address space.
struct Analysis {
  ProcGrid grid;
  Index K = 0;
  Index width = 0;  // K / Z
  std::vector<SparseMatrix> blocks;
  LambdaInfo lambda;
  FiberOwners owners;
  NeedSets need;
  OwnedCounts owned;

  // Per global rank, words per iteration.
  std::vector<std::int64_t> sddmm_precomm;
  std::vector<std::int64_t> sddmm_postcomm;
  std::vector<std::int64_t> spmm_precomm;
  std::vector<std::int64_t> spmm_postcomm;
  std::vector<std::int64_t> sparse_memory;
  std::vector<std::int64_t> baseline_precomm_sddmm;
  std::vector<std::int64_t> baseline_precomm_spmm;
  std::vector<std::int64_t> baseline_memory;
};

Analysis analyze(const SparseMatrix& S, const ProcGrid& grid, Index K, std::uint64_t seed);

}  // namespace spc3d
