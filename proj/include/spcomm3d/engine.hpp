#pragma once

// 3D SDDMM and SpMM over an X x Y x Z grid of in-process ranks, plus the
// sparsity-agnostic Dense3D baseline. Setup runs once; every kernel run
// reuses the compiled plans.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "spcomm3d/comm_plan.hpp"
#include "spcomm3d/grid.hpp"
#include "spcomm3d/kernels.hpp"
#include "spcomm3d/metrics.hpp"
#include "spcomm3d/ownership.hpp"
#include "spcomm3d/sparse.hpp"
#include "spcomm3d/transport.hpp"

namespace spc3d {

enum class Kernel { sddmm, spmm };
enum class Mode { sparse, dense3d };

const char* to_string(Kernel k) noexcept;
const char* to_string(Mode m) noexcept;

struct KernelConfig {
  ProcGrid grid;
  Index K = 0;
  Strategy strategy = Strategy::no_buffers;
  std::uint64_t seed = 1;
  /// OpenMP threads per rank for the local kernels.
  int kernel_threads = 1;
  TransportOptions transport;

  Index width() const noexcept { return K / grid.Z(); }
  /// Throws ConfigError unless K is a positive multiple of Z.
  void validate() const;
};

/// Everything one rank keeps between runs.
struct RankState {
  int rank = 0;
  Coord coord;
  std::optional<Communicator> row;
  std::optional<Communicator> col;
  std::optional<Communicator> depth;

  /// This rank's share of the nonzeros and the block gathered from its depth fiber.
  SparseMatrix part;
  std::vector<std::size_t> part_sizes;
  std::size_t part_offset = 0;
  LocalBlock block;
  std::vector<Index> row_ptr;
  std::uint64_t gathered_entries = 0;

  OwnerMap row_owner;
  OwnerMap col_owner;
  /// Ids owned by each row / column fiber member, ascending.
  std::vector<std::vector<Index>> row_owned_by;
  std::vector<std::vector<Index>> col_owned_by;

  RankMessages a_msgs;
  RankMessages b_msgs;
  RankMessages post_msgs;

  DenseRowStore a;
  DenseRowStore b;
  DenseRowStore a_out;
  Exchange pre_a;
  Exchange pre_b;
  Exchange post;
  LocalDense la;
  LocalDense lb;
  LocalDense lout;

  DenseRowStore a_full;
  DenseRowStore b_full;
  DenseRowStore a_out_full;
  Exchange post_full;
  LocalDense la_full;
  LocalDense lb_full;
  LocalDense lout_full;

  /// Final SDDMM values of `part`'s entries after the last run.
  std::vector<double> c_values;

  TrafficCounters setup_traffic;
  double setup_seconds = 0.0;
};

struct KernelResult {
  Kernel kernel = Kernel::sddmm;
  Mode mode = Mode::sparse;
  /// SDDMM output (empty for SpMM).
  SparseMatrix C;
  /// SpMM output (empty for SDDMM).
  DenseMatrix A;
  MetricsReport metrics;
};

class Engine {
public:
  /// Setup phase. A0 is M x K and B0 is N x K; each owner starts with its
  /// rows' z-th column chunk.
  Engine(const SparseMatrix& S, const DenseMatrix& A0, const DenseMatrix& B0, KernelConfig config);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Each run performs `iterations` rounds, applying iterate_update between
  /// consecutive rounds. The result reflects the last round.
  KernelResult run_sddmm(int iterations = 1);
  KernelResult run_spmm(int iterations = 1);
  KernelResult run_dense3d_baseline(Kernel kernel, int iterations = 1);
  KernelResult run(Kernel kernel, Mode mode, int iterations = 1);

  /// Owners scale their A and B rows by 0.5 and add 1 at column
  /// mix64(id) % K. Plans are untouched.
  void iterate_update(int count = 1);
  /// Total updates applied so far (by iterate_update or between rounds).
  int updates_applied() const noexcept { return updates_; }

  /// Hash of the setup products: blocks, owner maps, store directories, plans.
  std::uint64_t setup_checksum() const;
  /// Plans of every rank, schema "spcomm3d.plan/1".
  nlohmann::json plan_dump() const;

  const KernelConfig& config() const noexcept { return config_; }
  const RankState& rank_state(int r) const { return *ranks_.at(static_cast<std::size_t>(r)); }
  const World& world() const noexcept { return *world_; }
  /// Enables trace recording on later runs only if set at construction.
  void write_trace(const std::filesystem::path& path) const { world_->write_trace(path); }

private:
  void setup_rank(Communicator& world, RankState& rs, const SparseMatrix& part, const DenseMatrix& A0,
                  const DenseMatrix& B0);
  KernelResult collect(Kernel kernel, Mode mode, int iterations,
                       const std::vector<std::vector<TrafficCounters>>& pre,
                       const std::vector<std::vector<TrafficCounters>>& post,
                       const std::vector<std::vector<PhaseSeconds>>& times) const;

  KernelConfig config_;
  Index M_ = 0;
  Index N_ = 0;
  std::unique_ptr<World> world_;
  std::vector<std::unique_ptr<RankState>> ranks_;
  int updates_ = 0;
};

/// The update iterate_update applies, on a full matrix (test oracle).
void apply_iterate_update(DenseMatrix& M);

}  // namespace spc3d
