#include "spcomm3d/engine.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <string>

#include "spcomm3d/analysis.hpp"
#include "spcomm3d/error.hpp"
#include "spcomm3d/hash.hpp"

namespace spc3d {

namespace {

constexpr int kTagPreA = 10;
constexpr int kTagPreB = 11;
constexpr int kTagPost = 12;
constexpr int kTagNeed = 20;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string where(const RankState& rs, Phase phase) {
  return "rank " + std::to_string(rs.rank) + " (" + std::to_string(rs.coord.x) + "," + std::to_string(rs.coord.y) +
         "," + std::to_string(rs.coord.z) + ") " + to_string(phase) + ": ";
}

// Re-raises the active exception with rank context, keeping its category.
[[noreturn]] void rethrow_with_context(const RankState& rs, Phase phase) {
  const std::string ctx = where(rs, phase);
  try {
    throw;
  } catch (const AbortedError&) {
    throw;
  } catch (const DeadlockError& e) {
    throw DeadlockError(ctx + e.what());
  } catch (const TransportError& e) {
    throw TransportError(ctx + e.what());
  } catch (const PlanError& e) {
    throw PlanError(ctx + e.what());
  } catch (const OwnershipError& e) {
    throw OwnershipError(ctx + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(ctx + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const std::exception& e) {
    throw Error(ctx + e.what());
  }
}

std::vector<Index> owned_ids(const OwnerMap& map, int member) {
  std::vector<Index> out;
  for (Index id = map.ids.begin; id < map.ids.end; ++id)
    if (map.owner_of(id) == member) out.push_back(id);
  return out;
}

std::vector<Index> sorted_union(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Tells every fiber peer which of its rows I need; what they need from me
// comes back. Yields this rank's part of the broadcast graph.
RankMessages exchange_needs(Communicator& fiber, std::span<const Index> used, const OwnerMap& owners) {
  const int n = fiber.size();
  const int me = fiber.rank();
  std::vector<std::vector<Index>> need(static_cast<std::size_t>(n));
  for (Index id : used) need[static_cast<std::size_t>(owners.owner_of(id))].push_back(id);
  for (int p = 0; p < n; ++p)
    if (p != me) fiber.send<Index>(p, kTagNeed, need[static_cast<std::size_t>(p)]);

  RankMessages msgs;
  msgs.direction = Direction::broadcast;
  msgs.self = me;
  for (int p = 0; p < n; ++p) {
    if (p == me) continue;
    auto wanted = fiber.recv<Index>(p, kTagNeed);
    if (!wanted.empty()) msgs.outgoing.push_back({p, std::move(wanted)});
    if (!need[static_cast<std::size_t>(p)].empty()) msgs.incoming.push_back({p, need[static_cast<std::size_t>(p)]});
  }
  return msgs;
}

void load_owned(DenseRowStore& store, const std::vector<Index>& owned, const DenseMatrix& src, Index col0) {
  const auto w = static_cast<Index>(store.width());
  for (Index id : owned) {
    auto dst = store.row(id);
    for (Index k = 0; k < w; ++k) dst[static_cast<std::size_t>(k)] = src(id, col0 + k);
  }
}

// Dense3D PreComm: every owned row goes to every fiber member.
void gather_full(Communicator& fiber, const DenseRowStore& store, const std::vector<std::vector<Index>>& owned_by,
                 DenseRowStore& full) {
  const std::size_t w = store.width();
  const auto& mine = owned_by[static_cast<std::size_t>(fiber.rank())];
  std::vector<double> pack(mine.size() * w);
  for (std::size_t k = 0; k < mine.size(); ++k) {
    auto r = store.row(mine[k]);
    std::copy(r.begin(), r.end(), pack.begin() + static_cast<std::ptrdiff_t>(k * w));
  }
  fiber.count_staging(pack.size());
  auto all = fiber.allgather<double>(pack);
  std::size_t at = 0;
  for (const auto& ids : owned_by)
    for (Index id : ids) {
      auto dst = full.row(id);
      std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(at), w, dst.begin());
      at += w;
    }
  fiber.count_staging(all.size() - pack.size());
}

void update_owned(DenseRowStore& store, const std::vector<Index>& owned, Index K, Index col0) {
  const auto w = static_cast<Index>(store.width());
  for (Index id : owned) {
    auto r = store.row(id);
    for (auto& v : r) v *= 0.5;
    const auto hot = static_cast<Index>(mix64(static_cast<std::uint64_t>(id)) % static_cast<std::uint64_t>(K));
    if (hot >= col0 && hot < col0 + w) r[static_cast<std::size_t>(hot - col0)] += 1.0;
  }
}

void hash_plan(Checksum& c, const CommPlan& p) {
  c.add(static_cast<std::uint64_t>(p.strategy));
  c.add(static_cast<std::uint64_t>(p.direction));
  for (const auto* side : {&p.sends, &p.recvs})
    for (const auto& t : *side) {
      c.add(static_cast<std::uint64_t>(t.peer));
      c.add(static_cast<std::uint64_t>(t.mode));
      c.add(t.words);
      for (Index id : t.ids) c.add(static_cast<std::uint64_t>(id));
      for (auto o : t.offsets) c.add(o);
      for (const auto& d : t.descriptors) {
        c.add(d.offset);
        c.add(d.length);
      }
    }
}

nlohmann::json transfer_json(const PeerTransfer& t) {
  nlohmann::json d = nlohmann::json::array();
  for (const auto& x : t.descriptors) d.push_back({x.offset, x.length});
  return {{"peer", t.peer}, {"mode", to_string(t.mode)}, {"ids", t.ids},
          {"words", t.words}, {"offsets", t.offsets}, {"buffer_offset", t.buffer_offset},
          {"descriptors", d}};
}

nlohmann::json plan_json(const CommPlan& p, const DenseRowStore& store) {
  nlohmann::json sends = nlohmann::json::array(), recvs = nlohmann::json::array();
  for (const auto& t : p.sends) sends.push_back(transfer_json(t));
  for (const auto& t : p.recvs) recvs.push_back(transfer_json(t));
  return {{"strategy", to_string(p.strategy)},
          {"direction", to_string(p.direction)},
          {"fiber_rank", p.self},
          {"width", p.width},
          {"store_layout", to_string(store.layout())},
          {"store_order", store.layout_order()},
          {"send_buffer_words", p.send_buffer_words},
          {"recv_buffer_words", p.recv_buffer_words},
          {"inbox_words", p.inbox_words},
          {"sends", sends},
          {"recvs", recvs}};
}

}  // namespace

const char* to_string(Kernel k) noexcept { return k == Kernel::sddmm ? "sddmm" : "spmm"; }
const char* to_string(Mode m) noexcept { return m == Mode::sparse ? "sparse" : "dense3d"; }

void KernelConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (K % grid.Z() != 0)
    throw ConfigError("Z=" + std::to_string(grid.Z()) + " does not divide K=" + std::to_string(K));
  if (kernel_threads < 0) throw ConfigError("kernel_threads must be >= 0");
}

void apply_iterate_update(DenseMatrix& M) {
  const Index K = M.ncols();
  for (Index i = 0; i < M.nrows(); ++i) {
    auto r = M.row(i);
    for (auto& v : r) v *= 0.5;
    r[static_cast<std::size_t>(mix64(static_cast<std::uint64_t>(i)) % static_cast<std::uint64_t>(K))] += 1.0;
  }
}

Engine::Engine(const SparseMatrix& S, const DenseMatrix& A0, const DenseMatrix& B0, KernelConfig config)
    : config_(std::move(config)), M_(S.nrows()), N_(S.ncols()) {
  config_.validate();
  if (A0.nrows() != S.nrows() || A0.ncols() != config_.K)
    throw DimensionError("A0 must be " + std::to_string(S.nrows()) + "x" + std::to_string(config_.K));
  if (B0.nrows() != S.ncols() || B0.ncols() != config_.K)
    throw DimensionError("B0 must be " + std::to_string(S.ncols()) + "x" + std::to_string(config_.K));

  const ProcGrid& g = config_.grid;
  SparseMatrix sorted = S;
  sorted.sort();
  // Input distribution: each rank starts with its own nonzero share.
  std::vector<SparseMatrix> parts(static_cast<std::size_t>(g.P()));
  const auto blocks = dist2d(sorted, g);
  for (int x = 0; x < g.X(); ++x)
    for (int y = 0; y < g.Y(); ++y) {
      auto split = split_z(blocks[static_cast<std::size_t>(x * g.Y() + y)], g.Z());
      for (int z = 0; z < g.Z(); ++z) parts[static_cast<std::size_t>(g.rank(x, y, z))] = std::move(split[static_cast<std::size_t>(z)]);
    }

  world_ = std::make_unique<World>(g.P(), config_.transport);
  for (int r = 0; r < g.P(); ++r) {
    ranks_.push_back(std::make_unique<RankState>());
    ranks_.back()->rank = r;
    ranks_.back()->coord = g.coords(r);
  }
  world_->run([&](Communicator& world) {
    RankState& rs = *ranks_[static_cast<std::size_t>(world.world_rank())];
    try {
      setup_rank(world, rs, parts[static_cast<std::size_t>(rs.rank)], A0, B0);
    } catch (...) {
      rethrow_with_context(rs, Phase::setup);
    }
  });
}

Engine::~Engine() = default;

void Engine::setup_rank(Communicator& world, RankState& rs, const SparseMatrix& part, const DenseMatrix& A0,
                        const DenseMatrix& B0) {
  const auto t0 = Clock::now();
  world.set_phase(Phase::setup);
  const TrafficCounters before = world.counters();
  const ProcGrid& g = config_.grid;
  const Coord c = rs.coord;
  const Index w = config_.width();

  rs.row = world.split(c.x * g.Z() + c.z, c.y);
  rs.col = world.split(c.y * g.Z() + c.z, c.x);
  rs.depth = world.split(c.x * g.Y() + c.y, c.z);
  rs.part = part;

  // Gather S_{x,y} over the depth fiber, three words per nonzero.
  std::vector<std::uint64_t> wire;
  wire.reserve(static_cast<std::size_t>(part.nnz()) * 3);
  for (const auto& e : part.entries()) {
    wire.push_back(static_cast<std::uint64_t>(e.row));
    wire.push_back(static_cast<std::uint64_t>(e.col));
    wire.push_back(std::bit_cast<std::uint64_t>(e.value));
  }
  std::vector<std::size_t> counts;
  auto all = rs.depth->allgather<std::uint64_t>(wire, &counts);
  rs.part_sizes.clear();
  rs.part_offset = 0;
  for (int z = 0; z < g.Z(); ++z) {
    if (z < c.z) rs.part_offset += counts[static_cast<std::size_t>(z)] / 3;
    rs.part_sizes.push_back(counts[static_cast<std::size_t>(z)] / 3);
  }
  rs.gathered_entries = (all.size() - wire.size()) / 3;
  std::vector<Entry> entries;
  entries.reserve(all.size() / 3);
  for (std::size_t k = 0; k + 2 < all.size(); k += 3)
    entries.push_back({static_cast<Index>(all[k]), static_cast<Index>(all[k + 1]), std::bit_cast<double>(all[k + 2])});
  const SparseMatrix gathered(M_, N_, std::move(entries));
  rs.block = localize(gathered, c);
  rs.row_ptr = row_pointers(rs.block.local);

  const Range rows = split_range(M_, g.X(), c.x);
  const Range cols = split_range(N_, g.Y(), c.y);
  rs.row_owner = assign_owners_distributed(*rs.row, rs.block.row_global, rows, config_.seed);
  rs.col_owner = assign_owners_distributed(*rs.col, rs.block.col_global, cols, config_.seed);
  rs.row_owned_by.clear();
  rs.col_owned_by.clear();
  for (int m = 0; m < g.Y(); ++m) rs.row_owned_by.push_back(owned_ids(rs.row_owner, m));
  for (int m = 0; m < g.X(); ++m) rs.col_owned_by.push_back(owned_ids(rs.col_owner, m));

  rs.a_msgs = exchange_needs(*rs.row, rs.block.row_global, rs.row_owner);
  rs.b_msgs = exchange_needs(*rs.col, rs.block.col_global, rs.col_owner);
  rs.post_msgs = {Direction::reduce, rs.a_msgs.self, rs.a_msgs.incoming, rs.a_msgs.outgoing};

  const auto& my_rows = rs.row_owned_by[static_cast<std::size_t>(c.y)];
  const auto& my_cols = rs.col_owned_by[static_cast<std::size_t>(c.x)];
  const auto uw = static_cast<std::size_t>(w);
  rs.a = DenseRowStore(uw, sorted_union(my_rows, rs.block.row_global));
  rs.b = DenseRowStore(uw, sorted_union(my_cols, rs.block.col_global));
  rs.a_out = DenseRowStore(uw, rs.a.ids());
  load_owned(rs.a, my_rows, A0, c.z * w);
  load_owned(rs.b, my_cols, B0, c.z * w);

  rs.pre_a = Exchange(compile_plan(rs.a_msgs, rs.a, config_.strategy));
  rs.pre_b = Exchange(compile_plan(rs.b_msgs, rs.b, config_.strategy));
  rs.post = Exchange(compile_plan(rs.post_msgs, rs.a_out, config_.strategy));
  rs.la = LocalDense(rs.a, rs.block.row_global);
  rs.lb = LocalDense(rs.b, rs.block.col_global);
  rs.lout = LocalDense(rs.a_out, rs.block.row_global);

  auto full_range = [](Range r) {
    std::vector<Index> ids(static_cast<std::size_t>(r.size()));
    for (Index k = 0; k < r.size(); ++k) ids[static_cast<std::size_t>(k)] = r.begin + k;
    return ids;
  };
  rs.a_full = DenseRowStore(uw, full_range(rows));
  rs.b_full = DenseRowStore(uw, full_range(cols));
  rs.a_out_full = DenseRowStore(uw, full_range(rows));
  rs.post_full = Exchange(compile_plan(rs.post_msgs, rs.a_out_full, config_.strategy));
  rs.la_full = LocalDense(rs.a_full, rs.block.row_global);
  rs.lb_full = LocalDense(rs.b_full, rs.block.col_global);
  rs.lout_full = LocalDense(rs.a_out_full, rs.block.row_global);

  rs.setup_traffic = world.counters() - before;
  world.set_phase(Phase::none);
  rs.setup_seconds = seconds_since(t0);
}

KernelResult Engine::run_sddmm(int iterations) { return run(Kernel::sddmm, Mode::sparse, iterations); }
KernelResult Engine::run_spmm(int iterations) { return run(Kernel::spmm, Mode::sparse, iterations); }
KernelResult Engine::run_dense3d_baseline(Kernel kernel, int iterations) {
  return run(kernel, Mode::dense3d, iterations);
}

KernelResult Engine::run(Kernel kernel, Mode mode, int iterations) {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  const auto P = static_cast<std::size_t>(config_.grid.P());
  std::vector<std::vector<TrafficCounters>> pre(P), post(P);
  std::vector<std::vector<PhaseSeconds>> times(P);
  const bool dense = mode == Mode::dense3d;
  const Index K = config_.K;
  const Index w = config_.width();
  const int threads = config_.kernel_threads;

  world_->run([&](Communicator& world) {
    const auto r = static_cast<std::size_t>(world.world_rank());
    RankState& rs = *ranks_[r];
    Phase phase = Phase::none;
    try {
      const Index col0 = rs.coord.z * w;
      const auto& my_rows = rs.row_owned_by[static_cast<std::size_t>(rs.coord.y)];
      const auto& my_cols = rs.col_owned_by[static_cast<std::size_t>(rs.coord.x)];
      Communicator& row = *rs.row;
      Communicator& col = *rs.col;
      const LocalDense& la = dense ? rs.la_full : rs.la;
      const LocalDense& lb = dense ? rs.lb_full : rs.lb;
      LocalDense& lout = dense ? rs.lout_full : rs.lout;
      DenseRowStore& out_store = dense ? rs.a_out_full : rs.a_out;
      Exchange& post_x = dense ? rs.post_full : rs.post;

      for (int it = 0; it < iterations; ++it) {
        if (it > 0) {
          update_owned(rs.a, my_rows, K, col0);
          update_owned(rs.b, my_cols, K, col0);
        }
        PhaseSeconds sec;

        phase = Phase::precomm;
        world.set_phase(phase);
        auto t = Clock::now();
        TrafficCounters mark = world.counters();
        if (dense) {
          if (kernel == Kernel::sddmm) gather_full(row, rs.a, rs.row_owned_by, rs.a_full);
          gather_full(col, rs.b, rs.col_owned_by, rs.b_full);
        } else {
          if (kernel == Kernel::sddmm) rs.pre_a.run(row, rs.a, kTagPreA);
          rs.pre_b.run(col, rs.b, kTagPreB);
        }
        pre[r].push_back(world.counters() - mark);
        sec.precomm = seconds_since(t);

        phase = Phase::compute;
        world.set_phase(phase);
        t = Clock::now();
        std::vector<double> partial;
        if (kernel == Kernel::sddmm) {
          partial = local_sddmm(rs.block.local, la, lb, threads);
        } else {
          std::fill(out_store.words().begin(), out_store.words().end(), 0.0);
          local_spmm(rs.block.local, rs.row_ptr, lb, lout, threads);
        }
        sec.compute = seconds_since(t);

        phase = Phase::postcomm;
        world.set_phase(phase);
        t = Clock::now();
        mark = world.counters();
        if (kernel == Kernel::sddmm)
          rs.c_values = rs.depth->reduce_scatter(partial, rs.part_sizes);
        else
          post_x.run(row, out_store, kTagPost);
        post[r].push_back(world.counters() - mark);
        sec.postcomm = seconds_since(t);
        times[r].push_back(sec);
      }
      world.set_phase(Phase::none);
    } catch (...) {
      rethrow_with_context(rs, phase);
    }
  });
  updates_ += iterations - 1;
  return collect(kernel, mode, iterations, pre, post, times);
}

KernelResult Engine::collect(Kernel kernel, Mode mode, int iterations,
                             const std::vector<std::vector<TrafficCounters>>& pre,
                             const std::vector<std::vector<TrafficCounters>>& post,
                             const std::vector<std::vector<PhaseSeconds>>& times) const {
  const ProcGrid& g = config_.grid;
  const Index w = config_.width();
  const bool dense = mode == Mode::dense3d;
  KernelResult res;
  res.kernel = kernel;
  res.mode = mode;
  res.metrics.kernel = to_string(kernel);
  res.metrics.mode = to_string(mode);
  res.metrics.strategy = dense ? "allgather" : to_string(config_.strategy);
  res.metrics.grid = g;
  res.metrics.K = config_.K;
  res.metrics.iterations = iterations;

  if (kernel == Kernel::sddmm) {
    std::vector<Entry> entries;
    for (const auto& rs : ranks_) {
      const auto ents = rs->part.entries();
      for (std::size_t k = 0; k < ents.size(); ++k) entries.push_back({ents[k].row, ents[k].col, rs->c_values[k]});
    }
    res.C = SparseMatrix(M_, N_, std::move(entries));
  } else {
    res.A = DenseMatrix(M_, config_.K);
    for (const auto& rs : ranks_) {
      const DenseRowStore& out = dense ? rs->a_out_full : rs->a_out;
      for (Index id : rs->row_owned_by[static_cast<std::size_t>(rs->coord.y)]) {
        auto src = out.row(id);
        std::copy(src.begin(), src.end(), res.A.row(id).begin() + rs->coord.z * w);
      }
    }
  }

  for (std::size_t r = 0; r < ranks_.size(); ++r) {
    const RankState& rs = *ranks_[r];
    RankMetrics m;
    m.rank = rs.rank;
    m.coord = rs.coord;
    m.setup = rs.setup_traffic;
    m.precomm = pre[r];
    m.postcomm = post[r];
    if (dense)
      m.dense_store_words = (kernel == Kernel::sddmm ? rs.a_full.size_words() : rs.a_out_full.size_words()) +
                            rs.b_full.size_words();
    else
      m.dense_store_words =
          (kernel == Kernel::sddmm ? rs.a.size_words() : rs.a_out.size_words()) + rs.b.size_words();
    if (!dense)
      m.scratch_words = (kernel == Kernel::sddmm ? rs.pre_a.scratch_words() : rs.post.scratch_words()) +
                        rs.pre_b.scratch_words();
    else if (kernel == Kernel::spmm)
      m.scratch_words = rs.post_full.scratch_words();
    m.part_nnz = static_cast<std::uint64_t>(rs.part.nnz());
    m.block_nnz = static_cast<std::uint64_t>(rs.block.local.nnz());
    m.gathered_sparse_entries = rs.gathered_entries;
    std::vector<double> p, c, q;
    for (const auto& s : times[r]) {
      p.push_back(s.precomm);
      c.push_back(s.compute);
      q.push_back(s.postcomm);
    }
    m.seconds = {rs.setup_seconds, median(p), median(c), median(q)};
    res.metrics.ranks.push_back(std::move(m));
  }
  return res;
}

void Engine::iterate_update(int count) {
  if (count < 0) throw ConfigError("update count must be >= 0");
  if (count == 0) return;
  const Index K = config_.K;
  const Index w = config_.width();
  world_->run([&](Communicator& world) {
    RankState& rs = *ranks_[static_cast<std::size_t>(world.world_rank())];
    const Index col0 = rs.coord.z * w;
    for (int k = 0; k < count; ++k) {
      update_owned(rs.a, rs.row_owned_by[static_cast<std::size_t>(rs.coord.y)], K, col0);
      update_owned(rs.b, rs.col_owned_by[static_cast<std::size_t>(rs.coord.x)], K, col0);
    }
  });
  updates_ += count;
}

std::uint64_t Engine::setup_checksum() const {
  Checksum c;
  for (const auto& rs : ranks_) {
    c.add(static_cast<std::uint64_t>(rs->rank));
    for (const auto& e : rs->block.local.entries()) {
      c.add(static_cast<std::uint64_t>(e.row));
      c.add(static_cast<std::uint64_t>(e.col));
      c.add(std::bit_cast<std::uint64_t>(e.value));
    }
    for (Index id : rs->block.row_global) c.add(static_cast<std::uint64_t>(id));
    for (Index id : rs->block.col_global) c.add(static_cast<std::uint64_t>(id));
    c.add(rs->row_owner.checksum());
    c.add(rs->col_owner.checksum());
    for (const auto* s : {&rs->a, &rs->b, &rs->a_out, &rs->a_full, &rs->b_full, &rs->a_out_full})
      c.add(s->directory_checksum());
    for (const auto* x : {&rs->pre_a, &rs->pre_b, &rs->post, &rs->post_full}) hash_plan(c, x->plan());
  }
  return c.value();
}

nlohmann::json Engine::plan_dump() const {
  nlohmann::json ranks = nlohmann::json::array();
  for (const auto& rs : ranks_) {
    ranks.push_back({{"rank", rs->rank},
                     {"coord", {rs->coord.x, rs->coord.y, rs->coord.z}},
                     {"precomm_a", plan_json(rs->pre_a.plan(), rs->a)},
                     {"precomm_b", plan_json(rs->pre_b.plan(), rs->b)},
                     {"postcomm_spmm", plan_json(rs->post.plan(), rs->a_out)}});
  }
  const ProcGrid& g = config_.grid;
  return {{"schema", "spcomm3d.plan/1"},
          {"grid", {g.X(), g.Y(), g.Z()}},
          {"K", config_.K},
          {"width", config_.width()},
          {"strategy", to_string(config_.strategy)},
          {"ranks", ranks}};
}

}  // namespace spc3d
