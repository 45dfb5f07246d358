#include "spcomm3d/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spcomm3d/error.hpp"

namespace spc3d {

ProcGrid::ProcGrid(int X, int Y, int Z) : X_(X), Y_(Y), Z_(Z) {
  if (X < 1 || Y < 1 || Z < 1)
    throw ConfigError("grid dimensions must be >= 1, got " + std::to_string(X) + "x" + std::to_string(Y) + "x" +
                      std::to_string(Z));
}

std::vector<int> ProcGrid::row_fiber(int x, int z) const {
  std::vector<int> out;
  for (int y = 0; y < Y_; ++y) out.push_back(rank(x, y, z));
  return out;
}

std::vector<int> ProcGrid::col_fiber(int y, int z) const {
  std::vector<int> out;
  for (int x = 0; x < X_; ++x) out.push_back(rank(x, y, z));
  return out;
}

std::vector<int> ProcGrid::depth_fiber(int x, int y) const {
  std::vector<int> out;
  for (int z = 0; z < Z_; ++z) out.push_back(rank(x, y, z));
  return out;
}

ProcGrid make_grid(int P, int Z) {
  if (P < 1 || Z < 1 || P % Z != 0)
    throw ConfigError("Z=" + std::to_string(Z) + " must divide P=" + std::to_string(P));
  const int slice = P / Z;
  int Y = static_cast<int>(std::sqrt(static_cast<double>(slice)));
  while (Y * Y > slice) --Y;
  while ((Y + 1) * (Y + 1) <= slice) ++Y;
  while (slice % Y != 0) --Y;
  return ProcGrid(slice / Y, Y, Z);
}

Range split_range(Index n, int parts, int part) {
  const Index base = n / parts;
  const Index extra = n % parts;
  const Index begin = part * base + std::min<Index>(part, extra);
  return {begin, begin + base + (part < extra ? 1 : 0)};
}

int part_of(Index n, int parts, Index i) {
  const Index base = n / parts;
  const Index extra = n % parts;
  const Index big = extra * (base + 1);
  if (i < big) return static_cast<int>(i / (base + 1));
  return static_cast<int>(extra + (i - big) / base);
}

std::vector<SparseMatrix> dist2d(const SparseMatrix& S, const ProcGrid& grid) {
  std::vector<SparseMatrix> blocks(static_cast<std::size_t>(grid.X() * grid.Y()),
                                   SparseMatrix(S.nrows(), S.ncols()));
  for (const auto& e : S.entries()) {
    const int x = part_of(S.nrows(), grid.X(), e.row);
    const int y = part_of(S.ncols(), grid.Y(), e.col);
    blocks[static_cast<std::size_t>(x * grid.Y() + y)].push_back(e);
  }
  return blocks;
}

std::vector<SparseMatrix> split_z(const SparseMatrix& block, int Z) {
  if (Z < 1) throw ConfigError("Z must be >= 1");
  auto entries = block.entries();
  std::vector<SparseMatrix> parts;
  parts.reserve(static_cast<std::size_t>(Z));
  for (int z = 0; z < Z; ++z) {
    const Range r = split_range(block.nnz(), Z, z);
    SparseMatrix part(block.nrows(), block.ncols());
    for (Index k = r.begin; k < r.end; ++k) part.push_back(entries[static_cast<std::size_t>(k)]);
    parts.push_back(std::move(part));
  }
  return parts;
}

namespace {

std::optional<Index> find_local(const std::vector<Index>& global, Index g) {
  auto it = std::lower_bound(global.begin(), global.end(), g);
  if (it == global.end() || *it != g) return std::nullopt;
  return static_cast<Index>(it - global.begin());
}

}  // namespace

std::optional<Index> LocalBlock::local_row(Index global) const { return find_local(row_global, global); }
std::optional<Index> LocalBlock::local_col(Index global) const { return find_local(col_global, global); }

SparseMatrix LocalBlock::delocalize(Index nrows, Index ncols) const {
  SparseMatrix out(nrows, ncols);
  for (const auto& e : local.entries())
    out.push_back({row_global[static_cast<std::size_t>(e.row)], col_global[static_cast<std::size_t>(e.col)], e.value});
  return out;
}

LocalBlock localize(const SparseMatrix& part, Coord owner) {
  LocalBlock lb;
  lb.owner = owner;
  for (const auto& e : part.entries()) {
    lb.row_global.push_back(e.row);
    lb.col_global.push_back(e.col);
  }
  std::sort(lb.row_global.begin(), lb.row_global.end());
  lb.row_global.erase(std::unique(lb.row_global.begin(), lb.row_global.end()), lb.row_global.end());
  std::sort(lb.col_global.begin(), lb.col_global.end());
  lb.col_global.erase(std::unique(lb.col_global.begin(), lb.col_global.end()), lb.col_global.end());

  lb.local = SparseMatrix(static_cast<Index>(lb.row_global.size()), static_cast<Index>(lb.col_global.size()));
  for (const auto& e : part.entries())
    lb.local.push_back({*lb.local_row(e.row), *lb.local_col(e.col), e.value});
  return lb;
}

}  // namespace spc3d
