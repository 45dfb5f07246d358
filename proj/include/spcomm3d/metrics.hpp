#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcomm3d/grid.hpp"
#include "spcomm3d/transport.hpp"

namespace spc3d {

inline constexpr int kMetricsSchemaVersion = 1;

struct PhaseSeconds {
  double setup = 0.0;
  double precomm = 0.0;
  double compute = 0.0;
  double postcomm = 0.0;
  friend bool operator==(const PhaseSeconds&, const PhaseSeconds&) = default;
};

struct RankMetrics {
  int rank = 0;
  Coord coord;
  TrafficCounters setup;
  /// One entry per iteration.
  std::vector<TrafficCounters> precomm;
  std::vector<TrafficCounters> postcomm;
  std::uint64_t dense_store_words = 0;
  std::uint64_t scratch_words = 0;
  std::uint64_t part_nnz = 0;
  std::uint64_t block_nnz = 0;
  std::uint64_t gathered_sparse_entries = 0;
  /// Medians over iterations for the per-iteration phases.
  PhaseSeconds seconds;

  /// Last iteration's counters (all iterations move the same data).
  const TrafficCounters& last_precomm() const { return precomm.back(); }
  const TrafficCounters& last_postcomm() const { return postcomm.back(); }
};

/// Sums and maxima over ranks of one iteration's traffic.
struct Aggregate {
  std::uint64_t precomm_recv_sum = 0;
  std::uint64_t precomm_recv_max = 0;
  std::uint64_t postcomm_recv_sum = 0;
  std::uint64_t postcomm_recv_max = 0;
  std::uint64_t precomm_messages = 0;
  std::uint64_t postcomm_messages = 0;
  std::uint64_t staging_sum = 0;
  std::uint64_t dense_store_sum = 0;
  std::uint64_t dense_store_max = 0;
  std::uint64_t gathered_sparse_entries = 0;
  double precomm_recv_avg = 0.0;
  /// precomm_recv_max / K, the headline volume metric.
  double max_recv_k_normalized = 0.0;
  /// Slowest rank per phase.
  PhaseSeconds seconds;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct MetricsReport {
  std::string kernel;
  std::string mode;
  std::string strategy;
  ProcGrid grid;
  std::int64_t K = 0;
  int iterations = 0;
  std::vector<RankMetrics> ranks;

  Aggregate aggregate() const;
};

nlohmann::json to_json(const TrafficCounters& c);
nlohmann::json to_json(const Aggregate& a);
nlohmann::json to_json(const MetricsReport& report);

/// Inverse of to_json(MetricsReport); the embedded aggregate is ignored.
MetricsReport report_from_json(const nlohmann::json& report);
/// Rebuilds aggregates from the per-rank records of a serialized report.
Aggregate aggregate_from_json(const nlohmann::json& report);

/// One row per (run, rank, phase, metric): run,kernel,mode,strategy,grid,K,rank,phase,metric,value
void write_csv_header(std::ostream& out);
void write_csv(std::ostream& out, const std::string& run_id, const MetricsReport& report);

double median(std::vector<double> values);

}  // namespace spc3d
