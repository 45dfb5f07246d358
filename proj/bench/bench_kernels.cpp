// Local kernels: OpenMP versions against the serial references on one
// localized RMAT block.

#include <benchmark/benchmark.h>

#include "spcomm3d/grid.hpp"
#include "spcomm3d/kernels.hpp"

using namespace spc3d;

namespace {

struct Block {
  LocalBlock lb;
  std::vector<Index> row_ptr;
  DenseRowStore a, b, out;
  LocalDense la, lb_dense, lout;

  Block(int scale, Index nnz, Index K) {
    const auto S = gen_rmat(scale, nnz, 1);
    lb = localize(S);
    row_ptr = row_pointers(lb.local);
    const auto w = static_cast<std::size_t>(K);
    a = DenseRowStore(w, lb.row_global);
    b = DenseRowStore(w, lb.col_global);
    out = DenseRowStore(w, lb.row_global);
    const auto A = random_dense(S.nrows(), K, 2), B = random_dense(S.ncols(), K, 3);
    for (Index i : lb.row_global) std::copy(A.row(i).begin(), A.row(i).end(), a.row(i).begin());
    for (Index j : lb.col_global) std::copy(B.row(j).begin(), B.row(j).end(), b.row(j).begin());
    la = LocalDense(a, lb.row_global);
    lb_dense = LocalDense(b, lb.col_global);
    lout = LocalDense(out, lb.row_global);
  }
};

Block& block(Index K) {
  static Block b16(14, 300000, 16), b64(14, 300000, 64);
  return K == 16 ? b16 : b64;
}

void BM_SddmmSerial(benchmark::State& st) {
  auto& b = block(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(local_sddmm_serial(b.lb.local, b.la, b.lb_dense));
  st.SetItemsProcessed(st.iterations() * b.lb.local.nnz());
}

void BM_SddmmOpenMP(benchmark::State& st) {
  auto& b = block(st.range(0));
  const int threads = static_cast<int>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(local_sddmm(b.lb.local, b.la, b.lb_dense, threads));
  st.SetItemsProcessed(st.iterations() * b.lb.local.nnz());
}

void BM_SpmmSerial(benchmark::State& st) {
  auto& b = block(st.range(0));
  for (auto _ : st) {
    local_spmm_serial(b.lb.local, b.row_ptr, b.lb_dense, b.lout);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * b.lb.local.nnz());
}

void BM_SpmmOpenMP(benchmark::State& st) {
  auto& b = block(st.range(0));
  const int threads = static_cast<int>(st.range(1));
  for (auto _ : st) {
    local_spmm(b.lb.local, b.row_ptr, b.lb_dense, b.lout, threads);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * b.lb.local.nnz());
}

}  // namespace

BENCHMARK(BM_SddmmSerial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SddmmOpenMP)->ArgsProduct({{16, 64}, {1, 2, 4}})->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpmmSerial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpmmOpenMP)->ArgsProduct({{16, 64}, {1, 2, 4}})->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
