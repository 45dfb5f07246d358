#include "spcomm3d/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spcomm3d/error.hpp"

namespace spc3d {

namespace {

Index slice_width(Index K, int Z) {
  if (Z < 1 || K < Z || K % Z != 0)
    throw ConfigError("K=" + std::to_string(K) + " must be a positive multiple of Z=" + std::to_string(Z));
  return K / Z;
}

int exact_sqrt(std::int64_t v, const char* what) {
  auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v))));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  if (r * r != v) throw ConfigError(std::string(what) + " = " + std::to_string(v) + " is not a perfect square");
  return static_cast<int>(r);
}

Rational reduce(std::int64_t num, std::int64_t den) {
  const std::int64_t g = std::gcd(num, den);
  return g ? Rational{num / g, den / g} : Rational{0, 1};
}

std::vector<Index> distinct(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

Index FiberLambda::excess() const {
  Index total = 0;
  for (const auto& m : members)
    if (!m.empty()) total += static_cast<Index>(m.size()) - 1;
  return total;
}

std::vector<Index> FiberLambda::histogram() const {
  std::vector<Index> h(static_cast<std::size_t>(size + 1), 0);
  for (const auto& m : members) ++h[m.size()];
  return h;
}

FiberLambda fiber_lambda(std::span<const std::vector<Index>> used_per_member, Range ids) {
  FiberLambda f{ids, static_cast<int>(used_per_member.size()),
                std::vector<std::vector<int>>(static_cast<std::size_t>(ids.size()))};
  for (std::size_t m = 0; m < used_per_member.size(); ++m)
    for (Index id : used_per_member[m]) {
      if (!ids.contains(id)) throw DimensionError("id " + std::to_string(id) + " outside fiber range");
      f.members[static_cast<std::size_t>(id - ids.begin)].push_back(static_cast<int>(m));
    }
  return f;
}

std::vector<Index> used_rows(const SparseMatrix& block) {
  std::vector<Index> v;
  v.reserve(block.entries().size());
  for (const auto& e : block.entries()) v.push_back(e.row);
  return distinct(std::move(v));
}

std::vector<Index> used_cols(const SparseMatrix& block) {
  std::vector<Index> v;
  v.reserve(block.entries().size());
  for (const auto& e : block.entries()) v.push_back(e.col);
  return distinct(std::move(v));
}

LambdaInfo compute_lambda(std::span<const SparseMatrix> blocks, const ProcGrid& grid, int z) {
  if (static_cast<int>(blocks.size()) != grid.X() * grid.Y())
    throw DimensionError("expected " + std::to_string(grid.X() * grid.Y()) + " blocks");
  const Index M = blocks.empty() ? 0 : blocks.front().nrows();
  const Index N = blocks.empty() ? 0 : blocks.front().ncols();
  LambdaInfo info;
  info.z = z;
  for (int x = 0; x < grid.X(); ++x) {
    std::vector<std::vector<Index>> used;
    for (int y = 0; y < grid.Y(); ++y) used.push_back(used_rows(blocks[static_cast<std::size_t>(x * grid.Y() + y)]));
    info.rows.push_back(fiber_lambda(used, split_range(M, grid.X(), x)));
  }
  for (int y = 0; y < grid.Y(); ++y) {
    std::vector<std::vector<Index>> used;
    for (int x = 0; x < grid.X(); ++x) used.push_back(used_cols(blocks[static_cast<std::size_t>(x * grid.Y() + y)]));
    info.cols.push_back(fiber_lambda(used, split_range(N, grid.Y(), y)));
  }
  return info;
}

std::int64_t total_sparse_volume(const LambdaInfo& lambda, Index K, int Z) {
  const Index w = slice_width(K, Z);
  Index excess = 0;
  for (const auto& f : lambda.rows) excess += f.excess();
  for (const auto& f : lambda.cols) excess += f.excess();
  return excess * w;
}

namespace {

OwnerMap owners_for(const FiberLambda& f, std::uint64_t seed) {
  std::vector<std::vector<Index>> used(static_cast<std::size_t>(f.size));
  for (Index id = f.ids.begin; id < f.ids.end; ++id)
    for (int m : f.lambda_set(id)) used[static_cast<std::size_t>(m)].push_back(id);
  return assign_owners_serial(used, f.ids, seed);
}

}  // namespace

FiberOwners assign_all_owners(const LambdaInfo& lambda, std::uint64_t seed) {
  FiberOwners o;
  for (const auto& f : lambda.rows) o.rows.push_back(owners_for(f, seed));
  for (const auto& f : lambda.cols) o.cols.push_back(owners_for(f, seed));
  return o;
}

NeedSets compute_need_sets(std::span<const SparseMatrix> blocks, const ProcGrid& grid, const FiberOwners& owners) {
  NeedSets need;
  need.rows.resize(static_cast<std::size_t>(grid.P()));
  need.cols.resize(static_cast<std::size_t>(grid.P()));
  for (int r = 0; r < grid.P(); ++r) {
    const Coord c = grid.coords(r);
    const auto& block = blocks[static_cast<std::size_t>(c.x * grid.Y() + c.y)];
    for (Index i : used_rows(block))
      if (owners.rows[static_cast<std::size_t>(c.x)].owner_of(i) != c.y) need.rows[static_cast<std::size_t>(r)].push_back(i);
    for (Index j : used_cols(block))
      if (owners.cols[static_cast<std::size_t>(c.y)].owner_of(j) != c.x) need.cols[static_cast<std::size_t>(r)].push_back(j);
  }
  return need;
}

OwnedCounts owned_counts(const ProcGrid& grid, const FiberOwners& owners) {
  OwnedCounts out{std::vector<Index>(static_cast<std::size_t>(grid.P()), 0),
                  std::vector<Index>(static_cast<std::size_t>(grid.P()), 0)};
  for (int r = 0; r < grid.P(); ++r) {
    const Coord c = grid.coords(r);
    for (int o : owners.rows[static_cast<std::size_t>(c.x)].owner)
      if (o == c.y) ++out.rows[static_cast<std::size_t>(r)];
    for (int o : owners.cols[static_cast<std::size_t>(c.y)].owner)
      if (o == c.x) ++out.cols[static_cast<std::size_t>(r)];
  }
  return out;
}

std::vector<std::int64_t> per_rank_recv_volume(const NeedSets& need, Index K, int Z) {
  const Index w = slice_width(K, Z);
  std::vector<std::int64_t> out(need.rows.size());
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = w * static_cast<Index>(need.rows[r].size() + need.cols[r].size());
  return out;
}

std::vector<std::int64_t> sparse_memory(const NeedSets& need, const OwnedCounts& owned, Index K, int Z) {
  const Index w = slice_width(K, Z);
  std::vector<std::int64_t> out(need.rows.size());
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = w * (static_cast<Index>(need.rows[r].size() + need.cols[r].size()) + owned.rows[r] + owned.cols[r]);
  return out;
}

Rational agnostic_volume(AgnosticModel model, std::int64_t a_size, std::int64_t b_size, int P, int Z) {
  if (P < 1) throw ConfigError("P must be >= 1");
  switch (model) {
    case AgnosticModel::one_d:
      return reduce(b_size * (P - 1), P);
    case AgnosticModel::two_d: {
      const int root = exact_sqrt(P, "P");
      return reduce((a_size + b_size) * (root - 1), P);
    }
    case AgnosticModel::three_d: {
      if (Z < 1 || P % Z != 0) throw ConfigError("Z must divide P");
      const int root = exact_sqrt(P / Z, "P/Z");
      return reduce((a_size + b_size) * (root - 1), P);
    }
  }
  throw ConfigError("unknown model");
}

Rational agnostic_memory(AgnosticModel model, std::int64_t a_size, std::int64_t b_size, int P, int Z) {
  if (P < 1) throw ConfigError("P must be >= 1");
  switch (model) {
    case AgnosticModel::one_d:
      return reduce(a_size + b_size * P, P);
    case AgnosticModel::two_d:
      return reduce(a_size + b_size, exact_sqrt(P, "P"));
    case AgnosticModel::three_d: {
      if (Z < 1 || P % Z != 0) throw ConfigError("Z must divide P");
      return reduce(a_size + b_size, std::int64_t{Z} * exact_sqrt(P / Z, "P/Z"));
    }
  }
  throw ConfigError("unknown model");
}

Analysis analyze(const SparseMatrix& S, const ProcGrid& grid, Index K, std::uint64_t seed) {
  Analysis an;
  an.grid = grid;
  an.K = K;
  an.width = slice_width(K, grid.Z());
  an.blocks = dist2d(S, grid);
  an.lambda = compute_lambda(an.blocks, grid, 0);
  an.owners = assign_all_owners(an.lambda, seed);
  an.need = compute_need_sets(an.blocks, grid, an.owners);
  an.owned = owned_counts(grid, an.owners);

  const auto P = static_cast<std::size_t>(grid.P());
  const Index w = an.width;
  an.sddmm_precomm = per_rank_recv_volume(an.need, K, grid.Z());
  an.sparse_memory = sparse_memory(an.need, an.owned, K, grid.Z());
  an.sddmm_postcomm.assign(P, 0);
  an.spmm_precomm.assign(P, 0);
  an.spmm_postcomm.assign(P, 0);
  an.baseline_precomm_sddmm.assign(P, 0);
  an.baseline_precomm_spmm.assign(P, 0);
  an.baseline_memory.assign(P, 0);

  std::vector<std::vector<SparseMatrix>> parts;
  for (const auto& b : an.blocks) parts.push_back(split_z(b, grid.Z()));

  for (std::size_t r = 0; r < P; ++r) {
    const Coord c = grid.coords(static_cast<int>(r));
    const auto& rows = an.lambda.rows[static_cast<std::size_t>(c.x)];
    const auto& row_owner = an.owners.rows[static_cast<std::size_t>(c.x)];
    const Index part_nnz = parts[static_cast<std::size_t>(c.x * grid.Y() + c.y)][static_cast<std::size_t>(c.z)].nnz();
    an.sddmm_postcomm[r] = (grid.Z() - 1) * part_nnz;
    an.spmm_precomm[r] = w * static_cast<Index>(an.need.cols[r].size());
    Index contributions = 0;
    for (Index i = rows.ids.begin; i < rows.ids.end; ++i)
      if (row_owner.owner_of(i) == c.y && rows.lambda(i) > 0) contributions += rows.lambda(i) - 1;
    an.spmm_postcomm[r] = w * contributions;

    const Index a_rows = rows.ids.size();
    const Index b_rows = an.lambda.cols[static_cast<std::size_t>(c.y)].ids.size();
    const Index a_not_owned = a_rows - an.owned.rows[r];
    const Index b_not_owned = b_rows - an.owned.cols[r];
    an.baseline_precomm_sddmm[r] = w * (a_not_owned + b_not_owned);
    an.baseline_precomm_spmm[r] = w * b_not_owned;
    an.baseline_memory[r] = w * (a_rows + b_rows);
  }
  return an;
}

}  // namespace spc3d
