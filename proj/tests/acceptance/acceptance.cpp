// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Volumes and footprints are compared against
// a brute-force model built straight from the nonzero coordinates.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spcomm3d/analysis.hpp"
#include "spcomm3d/engine.hpp"
#include "support.hpp"

using namespace spc3d;
using spc3d::testing::max_rel_error;
using spc3d::testing::values_of;

namespace {

// Tolerances and sizes.
constexpr double kRelTol = 1e-12;
constexpr double kSweepBudgetSeconds = 300.0;
constexpr int kSweepMatrices = 50;
constexpr int kOwnershipSeeds = 100;

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

struct Criterion {
  int id;
  std::string title;
  long checks = 0;
  long failures = 0;
  std::string first_failure;
  std::vector<std::string> notes;

  template <typename F>
  void expect(bool ok, F&& describe) {
    ++checks;
    if (ok) return;
    if (failures++ == 0) first_failure = describe();
  }
  bool passed() const { return checks > 0 && failures == 0; }
};

std::string grid_name(const ProcGrid& g) { return cat("(", g.X(), ",", g.Y(), ",", g.Z(), ")"); }

// Brute-force communication model of one (matrix, grid, K, seed).
struct Model {
  ProcGrid grid;
  Index w = 0;
  std::vector<std::vector<Index>> rows_used;  // per block x*Y + y
  std::vector<std::vector<Index>> cols_used;
  std::vector<OwnerMap> row_owner;  // per x
  std::vector<OwnerMap> col_owner;  // per y
  std::vector<Index> block_nnz;
  // Per global rank.
  std::vector<std::int64_t> sddmm_pre, spmm_pre, sddmm_post, spmm_post, memory, baseline_pre_sddmm,
      baseline_pre_spmm;
  std::int64_t row_excess = 0;
  std::int64_t col_excess = 0;
};

Model build_model(const SparseMatrix& S, const ProcGrid& g, Index K, std::uint64_t seed) {
  Model m;
  m.grid = g;
  m.w = K / g.Z();
  const int X = g.X(), Y = g.Y();
  const auto nb = static_cast<std::size_t>(X * Y);
  m.rows_used.resize(nb);
  m.cols_used.resize(nb);
  m.block_nnz.assign(nb, 0);
  for (const auto& e : S.entries()) {
    const auto b = static_cast<std::size_t>(part_of(S.nrows(), X, e.row) * Y + part_of(S.ncols(), Y, e.col));
    m.rows_used[b].push_back(e.row);
    m.cols_used[b].push_back(e.col);
    ++m.block_nnz[b];
  }
  for (auto* v : {&m.rows_used, &m.cols_used})
    for (auto& ids : *v) {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
  for (int x = 0; x < X; ++x) {
    std::vector<std::vector<Index>> fiber;
    for (int y = 0; y < Y; ++y) fiber.push_back(m.rows_used[static_cast<std::size_t>(x * Y + y)]);
    m.row_owner.push_back(assign_owners_serial(fiber, split_range(S.nrows(), X, x), seed));
  }
  for (int y = 0; y < Y; ++y) {
    std::vector<std::vector<Index>> fiber;
    for (int x = 0; x < X; ++x) fiber.push_back(m.cols_used[static_cast<std::size_t>(x * Y + y)]);
    m.col_owner.push_back(assign_owners_serial(fiber, split_range(S.ncols(), Y, y), seed));
  }
  auto users = [&](const std::vector<std::vector<Index>>& used, std::size_t b, Index id) {
    return std::binary_search(used[b].begin(), used[b].end(), id);
  };
  for (int x = 0; x < X; ++x) {
    const Range r = split_range(S.nrows(), X, x);
    for (Index i = r.begin; i < r.end; ++i) {
      int lambda = 0;
      for (int y = 0; y < Y; ++y) lambda += users(m.rows_used, static_cast<std::size_t>(x * Y + y), i);
      m.row_excess += std::max(lambda - 1, 0);
    }
  }
  for (int y = 0; y < Y; ++y) {
    const Range r = split_range(S.ncols(), Y, y);
    for (Index j = r.begin; j < r.end; ++j) {
      int lambda = 0;
      for (int x = 0; x < X; ++x) lambda += users(m.cols_used, static_cast<std::size_t>(x * Y + y), j);
      m.col_excess += std::max(lambda - 1, 0);
    }
  }

  const auto P = static_cast<std::size_t>(g.P());
  for (auto* v : {&m.sddmm_pre, &m.spmm_pre, &m.sddmm_post, &m.spmm_post, &m.memory, &m.baseline_pre_sddmm,
                  &m.baseline_pre_spmm})
    v->assign(P, 0);
  for (int r = 0; r < g.P(); ++r) {
    const Coord c = g.coords(r);
    const auto b = static_cast<std::size_t>(c.x * Y + c.y);
    const auto& ro = m.row_owner[static_cast<std::size_t>(c.x)];
    const auto& co = m.col_owner[static_cast<std::size_t>(c.y)];
    std::int64_t need_a = 0, need_b = 0, own_a = 0, own_b = 0, reduce_in = 0;
    for (Index i : m.rows_used[b]) need_a += ro.owner_of(i) != c.y;
    for (Index j : m.cols_used[b]) need_b += co.owner_of(j) != c.x;
    for (Index i = ro.ids.begin; i < ro.ids.end; ++i) {
      if (ro.owner_of(i) != c.y) continue;
      ++own_a;
      for (int y = 0; y < Y; ++y)
        if (y != c.y && users(m.rows_used, static_cast<std::size_t>(c.x * Y + y), i)) ++reduce_in;
    }
    for (Index j = co.ids.begin; j < co.ids.end; ++j) own_b += co.owner_of(j) == c.x;
    const auto rr = static_cast<std::size_t>(r);
    const Index part = split_range(m.block_nnz[b], g.Z(), c.z).size();
    m.sddmm_pre[rr] = m.w * (need_a + need_b);
    m.spmm_pre[rr] = m.w * need_b;
    m.sddmm_post[rr] = (g.Z() - 1) * part;
    m.spmm_post[rr] = m.w * reduce_in;
    m.memory[rr] = m.w * (need_a + need_b + own_a + own_b);
    m.baseline_pre_spmm[rr] = m.w * (co.ids.size() - own_b);
    m.baseline_pre_sddmm[rr] = m.w * (ro.ids.size() - own_a) + m.baseline_pre_spmm[rr];
  }
  return m;
}

KernelConfig make_config(const ProcGrid& g, Index K, Strategy s, std::uint64_t seed) {
  KernelConfig c;
  c.grid = g;
  c.K = K;
  c.strategy = s;
  c.seed = seed;
  return c;
}

std::int64_t words(std::uint64_t v) { return static_cast<std::int64_t>(v); }

// Sweep inputs: alternating uniform and RMAT, with a few degenerate shapes.
std::vector<SparseMatrix> sweep_matrices() {
  std::vector<SparseMatrix> out;
  std::mt19937_64 rng(20240601);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  out.push_back(SparseMatrix(40, 40));
  out.push_back(SparseMatrix(30, 40, {{21, 2, 0.75}}));
  out.push_back(gen_uniform(200, 200, 2000, 3));
  for (int t = static_cast<int>(out.size()); t < kSweepMatrices; ++t) {
    const double density = uni(0.002, 0.05);
    const auto seed = static_cast<std::uint64_t>(7000 + t);
    if (t % 2 == 0) {
      const Index m = pick(8, 200), n = pick(8, 200);
      out.push_back(gen_uniform(m, n, std::max<Index>(1, static_cast<Index>(density * static_cast<double>(m * n))), seed));
    } else {
      const int scale = static_cast<int>(pick(5, 7));
      const Index n = Index{1} << scale;
      out.push_back(gen_rmat(scale, std::max<Index>(1, static_cast<Index>(density * static_cast<double>(n * n))), seed));
    }
  }
  return out;
}

// Uniform in [0, 1): no cancellation, so per-element relative error is
// bounded by the summation length times machine epsilon.
DenseMatrix nonnegative_dense(Index rows, Index cols, std::uint64_t seed) {
  auto m = random_dense(rows, cols, seed);
  for (double& v : m.values()) v = 0.5 * (v + 1.0);
  return m;
}

struct SweepRun {
  KernelResult sddmm;
  KernelResult spmm;
};

void check_staging(Criterion& c4, const std::string& where, Strategy s, const TrafficCounters& t, bool broadcast) {
  std::uint64_t want = 0;
  switch (s) {
    case Strategy::no_buffers:
      want = 0;
      break;
    case Strategy::single_buffer:
      want = broadcast ? t.sent_words : t.recv_words;
      break;
    case Strategy::both_buffers:
      want = t.sent_words + t.recv_words;
      break;
  }
  c4.expect(t.staging_words == want,
            [&] { return cat(where, " ", to_string(s), ": staging ", t.staging_words, " want ", want); });
}

void wire_equal(Criterion& c4, const std::string& where, const TrafficCounters& a, const TrafficCounters& b) {
  c4.expect(a.sent_words == b.sent_words && a.recv_words == b.recv_words && a.sent_messages == b.sent_messages &&
                a.recv_messages == b.recv_messages,
            [&] { return cat(where, ": wire traffic differs between strategies"); });
}

void run_sweep(Criterion& c1, Criterion& c2, Criterion& c4, Criterion& c7) {
  const std::vector<ProcGrid> grids{ProcGrid(1, 1, 1), ProcGrid(2, 2, 1), ProcGrid(2, 2, 2), ProcGrid(3, 2, 2),
                                    ProcGrid(3, 3, 4)};
  const std::vector<Index> Ks{4, 8, 16};
  const std::vector<Strategy> strategies{Strategy::both_buffers, Strategy::single_buffer, Strategy::no_buffers};
  const auto matrices = sweep_matrices();
  const auto t0 = std::chrono::steady_clock::now();
  long configs = 0;
  double mixed_worst = 0.0;
  Index largest = 0;

  for (std::size_t mi = 0; mi < matrices.size(); ++mi) {
    const auto& S = matrices[mi];
    largest = std::max(largest, S.nnz());
    c1.expect(S.nrows() <= 200 && S.ncols() <= 200 &&
                  static_cast<double>(S.nnz()) <= 0.05 * static_cast<double>(S.nrows() * S.ncols()),
              [&] { return cat("matrix ", mi, " outside the sweep envelope"); });
    for (const auto& g : grids)
      for (Index K : Ks) {
        if (K % g.Z() != 0) continue;
        const auto seed = static_cast<std::uint64_t>(mi * 31 + static_cast<std::size_t>(K));
        const auto A = nonnegative_dense(S.nrows(), K, seed + 1);
        const auto B = nonnegative_dense(S.ncols(), K, seed + 2);
        const auto want_c = sddmm_ref(S, A, B);
        const auto want_a = spmm_ref(S, B);
        const auto model = build_model(S, g, K, seed);
        const std::string tag = cat("matrix ", mi, " grid ", grid_name(g), " K ", K);

        std::vector<SweepRun> runs;
        for (Strategy s : strategies) {
          ++configs;
          const std::string where = cat(tag, " ", to_string(s));
          Engine eng(S, A, B, make_config(g, K, s, seed));
          SweepRun run{eng.run_sddmm(), eng.run_spmm()};

          c1.expect(spc3d::testing::same_pattern(run.sddmm.C, want_c), [&] { return where + ": SDDMM pattern"; });
          const double ec = max_rel_error(values_of(run.sddmm.C), values_of(want_c));
          c1.expect(ec <= kRelTol, [&] { return cat(where, ": SDDMM rel error ", ec); });
          const double ea = max_rel_error(run.spmm.A.values(), want_a.values());
          c1.expect(ea <= kRelTol, [&] { return cat(where, ": SpMM rel error ", ea); });

          std::int64_t sum_sddmm = 0, sum_spmm = 0;
          for (int r = 0; r < g.P(); ++r) {
            const auto rr = static_cast<std::size_t>(r);
            const auto& sd = run.sddmm.metrics.ranks[rr];
            const auto& sp = run.spmm.metrics.ranks[rr];
            const std::string at = cat(where, " rank ", r);
            c2.expect(words(sd.last_precomm().recv_words) == model.sddmm_pre[rr], [&] {
              return cat(at, ": SDDMM PreComm ", sd.last_precomm().recv_words, " want ", model.sddmm_pre[rr]);
            });
            c2.expect(words(sp.last_precomm().recv_words) == model.spmm_pre[rr], [&] {
              return cat(at, ": SpMM PreComm ", sp.last_precomm().recv_words, " want ", model.spmm_pre[rr]);
            });
            c2.expect(words(sd.last_postcomm().recv_words) == model.sddmm_post[rr], [&] {
              return cat(at, ": SDDMM PostComm ", sd.last_postcomm().recv_words, " want ", model.sddmm_post[rr]);
            });
            c2.expect(words(sp.last_postcomm().recv_words) == model.spmm_post[rr], [&] {
              return cat(at, ": SpMM PostComm ", sp.last_postcomm().recv_words, " want ", model.spmm_post[rr]);
            });
            sum_sddmm += words(sd.last_precomm().recv_words);
            sum_spmm += words(sp.last_precomm().recv_words);

            c7.expect(words(sd.dense_store_words) == model.memory[rr], [&] {
              return cat(at, ": SDDMM dense words ", sd.dense_store_words, " want ", model.memory[rr]);
            });
            c7.expect(words(sp.dense_store_words) == model.memory[rr], [&] {
              return cat(at, ": SpMM dense words ", sp.dense_store_words, " want ", model.memory[rr]);
            });

            check_staging(c4, at + " SDDMM PreComm", s, sd.last_precomm(), true);
            check_staging(c4, at + " SpMM PreComm", s, sp.last_precomm(), true);
            check_staging(c4, at + " SpMM PostComm", s, sp.last_postcomm(), false);
            c4.expect(sd.last_postcomm().staging_words == 0,
                      [&] { return at + ": SDDMM PostComm staging nonzero"; });
          }
          const std::int64_t slices = g.Z();
          c2.expect(sum_sddmm == slices * model.w * (model.row_excess + model.col_excess), [&] {
            return cat(where, ": SDDMM PreComm total ", sum_sddmm, " vs lambda sum ",
                       slices * model.w * (model.row_excess + model.col_excess));
          });
          c2.expect(sum_spmm == slices * model.w * model.col_excess,
                    [&] { return cat(where, ": SpMM PreComm total ", sum_spmm); });
          runs.push_back(std::move(run));

          if (s == Strategy::no_buffers) {
            // Same layout with values in [-1, 1): reported, not asserted.
            const auto Am = random_dense(S.nrows(), K, seed + 1), Bm = random_dense(S.ncols(), K, seed + 2);
            Engine mixed(S, Am, Bm, make_config(g, K, s, seed));
            mixed_worst = std::max({mixed_worst,
                                    max_rel_error(values_of(mixed.run_sddmm().C), values_of(sddmm_ref(S, Am, Bm))),
                                    max_rel_error(mixed.run_spmm().A.values(), spmm_ref(S, Bm).values())});
            auto bsd = eng.run_dense3d_baseline(Kernel::sddmm);
            auto bsp = eng.run_dense3d_baseline(Kernel::spmm);
            const double eb = std::max(max_rel_error(values_of(bsd.C), values_of(want_c)),
                                       max_rel_error(bsp.A.values(), want_a.values()));
            c1.expect(eb <= kRelTol, [&] { return cat(where, ": baseline rel error ", eb); });
            const std::int64_t M = S.nrows(), N = S.ncols(), Z = g.Z();
            for (int r = 0; r < g.P(); ++r) {
              const auto rr = static_cast<std::size_t>(r);
              const auto& rs = eng.rank_state(r);
              const std::string at = cat(where, " rank ", r, " baseline");
              const auto a_words = words(rs.a_full.size_words());
              const auto b_words = words(rs.b_full.size_words());
              c7.expect(words(bsd.metrics.ranks[rr].dense_store_words) == a_words + b_words,
                        [&] { return at + ": SDDMM dense words are not the full A and B chunks"; });
              c7.expect(words(bsp.metrics.ranks[rr].dense_store_words) ==
                            words(rs.a_out_full.size_words()) + b_words,
                        [&] { return at + ": SpMM dense words are not the full output and B chunks"; });
              // Within one row of Asize / (Z X) and Bsize / (Z Y).
              c7.expect(std::abs(a_words * Z * g.X() - M * K) <= model.w * Z * g.X() &&
                            std::abs(b_words * Z * g.Y() - N * K) <= model.w * Z * g.Y(),
                        [&] { return cat(at, ": A words ", a_words, " B words ", b_words); });
              if (g.X() == g.Y()) {
                const Rational f = agnostic_memory(AgnosticModel::three_d, M * K, N * K, g.P(), g.Z());
                c7.expect(std::abs((a_words + b_words) * f.den - f.num) <= 2 * model.w * f.den, [&] {
                  return cat(at, ": ", a_words + b_words, " words vs formula ", f.value());
                });
              }
              c2.expect(words(bsd.metrics.ranks[rr].last_precomm().recv_words) == model.baseline_pre_sddmm[rr] &&
                            words(bsp.metrics.ranks[rr].last_precomm().recv_words) == model.baseline_pre_spmm[rr],
                        [&] { return at + ": baseline PreComm volume"; });
            }
          }
        }

        for (std::size_t k = 1; k < runs.size(); ++k) {
          const std::string where = cat(tag, " ", to_string(strategies[k]), " vs ", to_string(strategies[0]));
          c4.expect(runs[k].sddmm.C == runs[0].sddmm.C, [&] { return where + ": SDDMM outputs differ"; });
          c4.expect(runs[k].spmm.A == runs[0].spmm.A, [&] { return where + ": SpMM outputs differ"; });
          for (int r = 0; r < g.P(); ++r) {
            const auto rr = static_cast<std::size_t>(r);
            for (auto kr : {&SweepRun::sddmm, &SweepRun::spmm}) {
              const auto& a = (runs[k].*kr).metrics.ranks[rr];
              const auto& b = (runs[0].*kr).metrics.ranks[rr];
              wire_equal(c4, cat(where, " rank ", r, " PreComm"), a.last_precomm(), b.last_precomm());
              wire_equal(c4, cat(where, " rank ", r, " PostComm"), a.last_postcomm(), b.last_postcomm());
            }
          }
        }
      }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c1.expect(static_cast<int>(matrices.size()) >= kSweepMatrices, [] { return std::string("too few matrices"); });
  c1.expect(secs < kSweepBudgetSeconds, [&] { return cat("sweep took ", secs, " s"); });
  c1.notes.push_back(cat(matrices.size(), " matrices (max nnz ", largest, "), ", configs, " engine configs in ",
                         static_cast<int>(secs), " s"));
  c1.notes.push_back(cat("mixed-sign dense inputs (not asserted): worst per-element relative error ", mixed_worst));
}

void dense_collapse(Criterion& c3) {
  const ProcGrid g(3, 3, 4);
  const Index M = 30, N = 27, K = 8;
  const auto S = gen_dense_pattern(M, N, 5);
  Engine eng(S, random_dense(M, K, 1), random_dense(N, K, 2), make_config(g, K, Strategy::no_buffers, 9));
  const auto blocks = dist2d(S, g);
  const auto lambda = compute_lambda(blocks, g, 0);
  for (const auto* fibers : {&lambda.rows, &lambda.cols})
    for (const auto& f : *fibers)
      for (Index id = f.ids.begin; id < f.ids.end; ++id)
        c3.expect(f.lambda(id) == 3, [&] { return cat("id ", id, " has lambda ", f.lambda(id)); });
  const auto model = build_model(S, g, K, 9);
  c3.expect(model.row_excess == 2 * M && model.col_excess == 2 * N,
            [&] { return cat("brute-force excess ", model.row_excess, "/", model.col_excess); });
  for (Kernel k : {Kernel::sddmm, Kernel::spmm}) {
    const auto sparse = eng.run(k, Mode::sparse);
    const auto base = eng.run(k, Mode::dense3d);
    for (int r = 0; r < g.P(); ++r) {
      const auto rr = static_cast<std::size_t>(r);
      const auto sv = sparse.metrics.ranks[rr].last_precomm().recv_words;
      const auto bv = base.metrics.ranks[rr].last_precomm().recv_words;
      c3.expect(sv == bv && sv > 0,
                [&] { return cat(to_string(k), " rank ", r, ": sparse ", sv, " words, baseline ", bv); });
    }
  }
}

void ownership_properties(Criterion& c5) {
  const auto S = gen_rmat(8, 3000, 17);
  const ProcGrid g(3, 3, 4);
  const Index K = 4;
  const auto A = random_dense(S.nrows(), K, 1);
  const auto B = random_dense(S.ncols(), K, 2);
  long with_candidates = 0;
  for (int seed = 0; seed < kOwnershipSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    const auto model = build_model(S, g, K, s);
    auto member_uses = [&](const std::vector<std::vector<Index>>& used, std::size_t b, Index id) {
      return std::binary_search(used[b].begin(), used[b].end(), id);
    };
    for (int x = 0; x < g.X(); ++x) {
      const auto& o = model.row_owner[static_cast<std::size_t>(x)];
      for (Index i = o.ids.begin; i < o.ids.end; ++i) {
        bool any = false;
        for (int y = 0; y < g.Y(); ++y) any |= member_uses(model.rows_used, static_cast<std::size_t>(x * g.Y() + y), i);
        if (!any) continue;
        ++with_candidates;
        c5.expect(member_uses(model.rows_used, static_cast<std::size_t>(x * g.Y() + o.owner_of(i)), i),
                  [&] { return cat("seed ", seed, " row ", i, " owned outside its lambda set"); });
      }
    }
    for (int y = 0; y < g.Y(); ++y) {
      const auto& o = model.col_owner[static_cast<std::size_t>(y)];
      for (Index j = o.ids.begin; j < o.ids.end; ++j) {
        bool any = false;
        for (int x = 0; x < g.X(); ++x) any |= member_uses(model.cols_used, static_cast<std::size_t>(x * g.Y() + y), j);
        if (!any) continue;
        ++with_candidates;
        c5.expect(member_uses(model.cols_used, static_cast<std::size_t>(o.owner_of(j) * g.Y() + y), j),
                  [&] { return cat("seed ", seed, " col ", j, " owned outside its lambda set"); });
      }
    }

    Engine e1(S, A, B, make_config(g, K, Strategy::no_buffers, s));
    for (int r = 0; r < g.P(); ++r) {
      const auto& rs = e1.rank_state(r);
      c5.expect(rs.row_owner == model.row_owner[static_cast<std::size_t>(rs.coord.x)] &&
                    rs.col_owner == model.col_owner[static_cast<std::size_t>(rs.coord.y)],
                [&] { return cat("seed ", seed, " rank ", r, ": distributed owners differ from serial"); });
    }
    Engine e2(S, A, B, make_config(g, K, Strategy::no_buffers, s));
    c5.expect(e1.setup_checksum() == e2.setup_checksum(), [&] { return cat("seed ", seed, ": setup differs"); });
    const auto c1 = e1.run_sddmm(), c2 = e2.run_sddmm();
    const auto a1 = e1.run_spmm(), a2 = e2.run_spmm();
    c5.expect(c1.C == c2.C && a1.A == a2.A, [&] { return cat("seed ", seed, ": outputs differ"); });
    bool same_traffic = true;
    for (int r = 0; r < g.P(); ++r) {
      const auto rr = static_cast<std::size_t>(r);
      same_traffic &= c1.metrics.ranks[rr].last_precomm() == c2.metrics.ranks[rr].last_precomm() &&
                      a1.metrics.ranks[rr].last_postcomm() == a2.metrics.ranks[rr].last_postcomm();
    }
    c5.expect(same_traffic, [&] { return cat("seed ", seed, ": traffic differs"); });
  }
  c5.notes.push_back(cat(kOwnershipSeeds, " seeds, ", with_candidates, " owned ids with candidates, nnz ", S.nnz()));
}

void improvement_trend(Criterion& c6) {
  const auto S = gen_rmat(14, 330000, 14);
  c6.notes.push_back(cat("RMAT scale 14: ", S.nrows(), "x", S.ncols(), ", nnz ", S.nnz()));
  c6.expect(S.nnz() >= 250000 && S.nnz() <= 350000, [&] { return cat("nnz ", S.nnz(), " not near 300k"); });

  auto ratio_for = [&](const ProcGrid& g, Index K, double* sparse_norm, double* base_norm) {
    Engine eng(S, random_dense(S.nrows(), K, 1), random_dense(S.ncols(), K, 2),
               make_config(g, K, Strategy::no_buffers, 3));
    const auto sp = eng.run(Kernel::sddmm, Mode::sparse).metrics.aggregate();
    const auto bl = eng.run(Kernel::sddmm, Mode::dense3d).metrics.aggregate();
    *sparse_norm = sp.max_recv_k_normalized;
    *base_norm = bl.max_recv_k_normalized;
    return sp.precomm_recv_max == 0 ? 0.0 : bl.max_recv_k_normalized / sp.max_recv_k_normalized;
  };

  double sn = 0, bn = 0;
  const double ratio = ratio_for(ProcGrid(3, 3, 4), 16, &sn, &bn);
  c6.expect(ratio > 1.0, [&] { return cat("baseline/sparse ratio ", ratio); });
  char line[160];
  std::snprintf(line, sizeof line, "grid (3,3,4) K=16: sparse %.1f, Dense3D %.1f K-normalized words, ratio %.3f",
                sn, bn, ratio);
  c6.notes.push_back(line);
  c6.notes.push_back("P=36 table:  Z   K   grid      sparse/K   dense3d/K   ratio");
  for (int Z : {1, 2, 4})
    for (Index K : {16, 32}) {
      const ProcGrid g = make_grid(36, Z);
      const double r = ratio_for(g, K, &sn, &bn);
      std::snprintf(line, sizeof line, "            %-3d %-3lld %-9s %-10.1f %-11.1f %.3f", Z,
                    static_cast<long long>(K), grid_name(g).c_str(), sn, bn, r);
      c6.notes.push_back(line);
    }
}

void formula_checks(Criterion& c8) {
  // Asize = Bsize = 3600 words, e.g. 900 x 4 dense matrices.
  const std::int64_t a = 3600, b = 3600;
  struct Row {
    int P, Z;
    std::int64_t v1d, v2d, v3d, m1d, m2d, m3d;
  };
  const Row rows[] = {
      {4, 1, 2700, 1800, 1800, 4500, 3600, 3600},
      {16, 4, 3375, 1350, 450, 3825, 1800, 900},
      {36, 4, 3500, 1000, 400, 3700, 1200, 600},
  };
  for (const auto& r : rows) {
    const std::string at = cat("P=", r.P, " Z=", r.Z);
    auto is = [&](Rational q, std::int64_t want, const char* what) {
      c8.expect(q.den != 0 && q.num == want * q.den,
                [&] { return cat(at, " ", what, ": ", q.num, "/", q.den, " want ", want); });
    };
    is(agnostic_volume(AgnosticModel::one_d, a, b, r.P), r.v1d, "1D volume");
    is(agnostic_volume(AgnosticModel::two_d, a, b, r.P), r.v2d, "2D volume");
    is(agnostic_volume(AgnosticModel::three_d, a, b, r.P, r.Z), r.v3d, "3D volume");
    is(agnostic_memory(AgnosticModel::one_d, a, b, r.P), r.m1d, "1D memory");
    is(agnostic_memory(AgnosticModel::two_d, a, b, r.P), r.m2d, "2D memory");
    is(agnostic_memory(AgnosticModel::three_d, a, b, r.P, r.Z), r.m3d, "3D memory");
  }
  for (int P : {1, 4, 9, 16, 25, 36, 64})
    for (std::int64_t as : {1, 100, 3600, 12345}) {
      c8.expect(agnostic_volume(AgnosticModel::three_d, as, 2 * as, P, 1) ==
                        agnostic_volume(AgnosticModel::two_d, as, 2 * as, P) &&
                    agnostic_memory(AgnosticModel::three_d, as, 2 * as, P, 1) ==
                        agnostic_memory(AgnosticModel::two_d, as, 2 * as, P),
                [&] { return cat("3D does not collapse to 2D at P=", P, " Asize=", as); });
    }
}

}  // namespace

int main() {
  std::vector<Criterion> cs{
      {1, "oracle equivalence sweep"},
      {2, "exact volume identities"},
      {3, "dense-pattern collapse"},
      {4, "strategy equivalence and staging counters"},
      {5, "owner assignment properties"},
      {6, "improvement trend"},
      {7, "memory footprint identity"},
      {8, "agnostic formula checks"},
  };
  auto guarded = [&](std::initializer_list<int> ids, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      for (int id : ids) cs[static_cast<std::size_t>(id - 1)].expect(false, [&] { return cat("exception: ", e.what()); });
    }
  };
  guarded({1, 2, 4, 7}, [&] { run_sweep(cs[0], cs[1], cs[3], cs[6]); });
  guarded({3}, [&] { dense_collapse(cs[2]); });
  guarded({5}, [&] { ownership_properties(cs[4]); });
  guarded({6}, [&] { improvement_trend(cs[5]); });
  guarded({8}, [&] { formula_checks(cs[7]); });

  bool all = true;
  for (const auto& c : cs) {
    for (const auto& n : c.notes) std::cout << "  [" << c.id << "] " << n << "\n";
    std::cout << (c.passed() ? "PASS" : "FAIL") << " " << c.id << " " << c.title << " (" << c.checks << " checks";
    if (c.failures) std::cout << ", " << c.failures << " failed; first: " << c.first_failure;
    std::cout << ")\n";
    all &= c.passed();
  }
  return all ? 0 : 1;
}
