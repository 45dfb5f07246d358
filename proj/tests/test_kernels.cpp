#include <gtest/gtest.h>

#include <numeric>

#include "spcomm3d/error.hpp"
#include "spcomm3d/grid.hpp"
#include "spcomm3d/kernels.hpp"

using namespace spc3d;

namespace {

std::vector<Index> iota_ids(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

// Copies columns [c0, c0 + w) of `m` into a by-id store over all its rows.
DenseRowStore chunk_store(const DenseMatrix& m, Index c0, std::size_t w) {
  DenseRowStore s(w, iota_ids(m.nrows()));
  for (Index i = 0; i < m.nrows(); ++i)
    for (std::size_t k = 0; k < w; ++k) s.row(i)[k] = m(i, c0 + static_cast<Index>(k));
  return s;
}

struct Fixture {
  SparseMatrix S;
  DenseMatrix A, B;
  LocalBlock lb;
  DenseRowStore sa, sb;
};

Fixture make(Index m, Index n, Index nnz, Index K, std::uint64_t seed) {
  Fixture f;
  f.S = gen_uniform(m, n, nnz, seed);
  f.A = random_dense(m, K, seed + 100);
  f.B = random_dense(n, K, seed + 200);
  f.lb = localize(f.S);
  f.sa = DenseRowStore(static_cast<std::size_t>(K), f.lb.row_global);
  f.sb = DenseRowStore(static_cast<std::size_t>(K), f.lb.col_global);
  for (Index i : f.lb.row_global)
    std::copy(f.A.row(i).begin(), f.A.row(i).end(), f.sa.row(i).begin());
  for (Index j : f.lb.col_global)
    std::copy(f.B.row(j).begin(), f.B.row(j).end(), f.sb.row(j).begin());
  return f;
}

}  // namespace

TEST(LocalSddmm, SingleBlockMatchesReferenceBitwise) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = make(30, 25, 120, 8, seed);
    LocalDense a(f.sa, f.lb.row_global), b(f.sb, f.lb.col_global);
    const auto got = local_sddmm(f.lb.local, a, b);
    const auto want = sddmm_ref(f.S, f.A, f.B);
    ASSERT_EQ(got.size(), want.entries().size());
    for (std::size_t e = 0; e < got.size(); ++e) EXPECT_EQ(got[e], want.entries()[e].value);
  }
}

TEST(LocalSddmm, SlicePartialsSumToFullProduct) {
  SparseMatrix S(1, 1, {{0, 0, 2.0}});
  DenseMatrix A(1, 4, {1, 2, 3, 4});
  DenseMatrix B(1, 4, {1, 1, 2, 2});
  const auto lb = localize(S);
  double total = 0.0;
  std::vector<double> parts;
  for (Index z = 0; z < 2; ++z) {
    auto sa = chunk_store(A, z * 2, 2), sb = chunk_store(B, z * 2, 2);
    LocalDense a(sa, lb.row_global), b(sb, lb.col_global);
    const auto p = local_sddmm(lb.local, a, b);
    parts.push_back(p[0]);
    total += p[0];
  }
  EXPECT_EQ(parts, (std::vector<double>{6.0, 28.0}));
  EXPECT_EQ(total, 34.0);
}

TEST(LocalSddmm, EmptyBlock) {
  SparseMatrix S(4, 4);
  const auto lb = localize(S);
  DenseRowStore sa(3, {}), sb(3, {});
  LocalDense a(sa, lb.row_global), b(sb, lb.col_global);
  EXPECT_TRUE(local_sddmm(lb.local, a, b).empty());
  EXPECT_TRUE(local_sddmm_serial(lb.local, a, b).empty());
}

TEST(LocalSpmm, SingleBlockMatchesReferenceBitwise) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = make(30, 25, 120, 8, seed);
    DenseRowStore out(8, f.lb.row_global);
    LocalDense b(f.sb, f.lb.col_global), o(out, f.lb.row_global);
    const auto rp = row_pointers(f.lb.local);
    local_spmm(f.lb.local, rp, b, o);
    const auto want = spmm_ref(f.S, f.B);
    for (Index i : f.lb.row_global)
      for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(out.row(i)[k], want(i, static_cast<Index>(k)));
  }
}

TEST(LocalSpmm, SingleNonzero) {
  SparseMatrix S(3, 3, {{2, 1, 3.0}});
  DenseMatrix B(3, 2, {0, 0, 4, 5, 0, 0});
  const auto lb = localize(S);
  auto sb = chunk_store(B, 0, 2);
  DenseRowStore out(2, lb.row_global);
  out.row(2)[0] = 77.0;
  LocalDense b(sb, lb.col_global), o(out, lb.row_global);
  local_spmm(lb.local, row_pointers(lb.local), b, o);
  EXPECT_EQ(out.row(2)[0], 12.0);
  EXPECT_EQ(out.row(2)[1], 15.0);
}

TEST(Kernels, ThreadedEqualsSerialBitwise) {
  auto f = make(200, 180, 3000, 16, 9);
  LocalDense a(f.sa, f.lb.row_global), b(f.sb, f.lb.col_global);
  const auto serial = local_sddmm_serial(f.lb.local, a, b);
  const auto rp = row_pointers(f.lb.local);
  DenseRowStore ref_out(16, f.lb.row_global);
  LocalDense ro(ref_out, f.lb.row_global);
  local_spmm_serial(f.lb.local, rp, b, ro);
  for (int threads : {1, 4}) {
    EXPECT_EQ(local_sddmm(f.lb.local, a, b, threads), serial);
    DenseRowStore out(16, f.lb.row_global);
    LocalDense o(out, f.lb.row_global);
    local_spmm(f.lb.local, rp, b, o, threads);
    EXPECT_TRUE(std::equal(out.words().begin(), out.words().end(), ref_out.words().begin()));
  }
}

TEST(LocalDense, MissingIdThrows) {
  DenseRowStore s(2, {1, 3});
  const std::vector<Index> ids{1, 2};
  EXPECT_THROW(LocalDense(s, ids), PlanError);
}

TEST(LocalDense, FollowsRelayout) {
  DenseRowStore s(1, {1, 3, 5});
  s.row(5)[0] = 50;
  s.relayout({5, 1, 3}, StoreLayout::peer_grouped);
  const std::vector<Index> ids{5};
  LocalDense d(s, ids);
  EXPECT_EQ(*d.row(0), 50.0);
}

TEST(RowPointers, CsrStarts) {
  SparseMatrix S(4, 4, {{0, 1, 1.0}, {0, 3, 1.0}, {2, 2, 1.0}});
  EXPECT_EQ(row_pointers(S), (std::vector<Index>{0, 2, 2, 3, 3}));
  EXPECT_EQ(row_pointers(SparseMatrix(2, 2)), (std::vector<Index>{0, 0, 0}));
}
