#pragma once

#include <optional>
#include <vector>

#include "spcomm3d/sparse.hpp"

namespace spc3d {

struct Coord {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// X x Y x Z processor grid. Ranks are linearized z-fastest:
/// r = x*(Y*Z) + y*Z + z.
class ProcGrid {
public:
  ProcGrid() = default;
  ProcGrid(int X, int Y, int Z);

  int X() const noexcept { return X_; }
  int Y() const noexcept { return Y_; }
  int Z() const noexcept { return Z_; }
  int P() const noexcept { return X_ * Y_ * Z_; }

  int rank(int x, int y, int z) const noexcept { return x * (Y_ * Z_) + y * Z_ + z; }
  int rank(Coord c) const noexcept { return rank(c.x, c.y, c.z); }
  Coord coords(int r) const noexcept { return {r / (Y_ * Z_), (r / Z_) % Y_, r % Z_}; }

  /// P_{x,:,z}, ordered by y.
  std::vector<int> row_fiber(int x, int z) const;
  /// P_{:,y,z}, ordered by x.
  std::vector<int> col_fiber(int y, int z) const;
  /// P_{x,y,:}, ordered by z.
  std::vector<int> depth_fiber(int x, int y) const;

  friend bool operator==(const ProcGrid&, const ProcGrid&) = default;

private:
  int X_ = 1;
  int Y_ = 1;
  int Z_ = 1;
};

/// Most-square X x Y factorization of P/Z with X >= Y.
ProcGrid make_grid(int P, int Z);

/// Half-open index range.
struct Range {
  Index begin = 0;
  Index end = 0;
  Index size() const noexcept { return end - begin; }
  bool contains(Index i) const noexcept { return i >= begin && i < end; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Part `part` of a near-equal contiguous split of [0, n) into `parts`
/// pieces; the first n % parts pieces get one extra element.
Range split_range(Index n, int parts, int part);
/// Inverse of split_range: which part holds index i.
int part_of(Index n, int parts, Index i);

/// X x Y block partition of S by contiguous row/column ranges. Block (x, y)
/// is at index x*Y + y and keeps global indices and S's dimensions.
std::vector<SparseMatrix> dist2d(const SparseMatrix& S, const ProcGrid& grid);

/// Contiguous chunks of the row-major entry list, sizes differing by <= 1.
std::vector<SparseMatrix> split_z(const SparseMatrix& block, int Z);

/// A block with rows and columns renumbered densely. `row_global[l]` is the
/// global row of local row l (strictly increasing); same for columns.
struct LocalBlock {
  Coord owner;
  SparseMatrix local;
  std::vector<Index> row_global;
  std::vector<Index> col_global;

  std::optional<Index> local_row(Index global) const;
  std::optional<Index> local_col(Index global) const;

  /// Maps every entry back to global indices in an nrows x ncols matrix.
  SparseMatrix delocalize(Index nrows, Index ncols) const;
};

LocalBlock localize(const SparseMatrix& part, Coord owner = {});

}  // namespace spc3d
