#include "spcomm3d/metrics.hpp"

#include <algorithm>
#include <ostream>

namespace spc3d {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Aggregate MetricsReport::aggregate() const {
  Aggregate a;
  for (const auto& r : ranks) {
    const auto& pre = r.last_precomm();
    const auto& post = r.last_postcomm();
    a.precomm_recv_sum += pre.recv_words;
    a.precomm_recv_max = std::max(a.precomm_recv_max, pre.recv_words);
    a.postcomm_recv_sum += post.recv_words;
    a.postcomm_recv_max = std::max(a.postcomm_recv_max, post.recv_words);
    a.precomm_messages += pre.recv_messages;
    a.postcomm_messages += post.recv_messages;
    a.staging_sum += pre.staging_words + post.staging_words;
    a.dense_store_sum += r.dense_store_words;
    a.dense_store_max = std::max(a.dense_store_max, r.dense_store_words);
    a.gathered_sparse_entries += r.gathered_sparse_entries;
    a.seconds.setup = std::max(a.seconds.setup, r.seconds.setup);
    a.seconds.precomm = std::max(a.seconds.precomm, r.seconds.precomm);
    a.seconds.compute = std::max(a.seconds.compute, r.seconds.compute);
    a.seconds.postcomm = std::max(a.seconds.postcomm, r.seconds.postcomm);
  }
  if (!ranks.empty()) a.precomm_recv_avg = static_cast<double>(a.precomm_recv_sum) / static_cast<double>(ranks.size());
  if (K > 0) a.max_recv_k_normalized = static_cast<double>(a.precomm_recv_max) / static_cast<double>(K);
  return a;
}

nlohmann::json to_json(const TrafficCounters& c) {
  return {{"sent_words", c.sent_words},
          {"sent_messages", c.sent_messages},
          {"recv_words", c.recv_words},
          {"recv_messages", c.recv_messages},
          {"staging_words", c.staging_words}};
}

namespace {

nlohmann::json to_json(const PhaseSeconds& s) {
  return {{"setup", s.setup}, {"precomm", s.precomm}, {"compute", s.compute}, {"postcomm", s.postcomm}};
}

TrafficCounters counters_from(const nlohmann::json& j) {
  TrafficCounters c;
  c.sent_words = j.at("sent_words");
  c.sent_messages = j.at("sent_messages");
  c.recv_words = j.at("recv_words");
  c.recv_messages = j.at("recv_messages");
  c.staging_words = j.at("staging_words");
  return c;
}

}  // namespace

nlohmann::json to_json(const Aggregate& a) {
  return {{"precomm_recv_sum", a.precomm_recv_sum},
          {"precomm_recv_max", a.precomm_recv_max},
          {"precomm_recv_avg", a.precomm_recv_avg},
          {"postcomm_recv_sum", a.postcomm_recv_sum},
          {"postcomm_recv_max", a.postcomm_recv_max},
          {"precomm_messages", a.precomm_messages},
          {"postcomm_messages", a.postcomm_messages},
          {"staging_sum", a.staging_sum},
          {"dense_store_sum", a.dense_store_sum},
          {"dense_store_max", a.dense_store_max},
          {"gathered_sparse_entries", a.gathered_sparse_entries},
          {"max_recv_k_normalized", a.max_recv_k_normalized},
          {"max_seconds", to_json(a.seconds)}};
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json ranks = nlohmann::json::array();
  for (const auto& r : report.ranks) {
    nlohmann::json pre = nlohmann::json::array(), post = nlohmann::json::array();
    for (const auto& c : r.precomm) pre.push_back(to_json(c));
    for (const auto& c : r.postcomm) post.push_back(to_json(c));
    ranks.push_back({{"rank", r.rank},
                     {"coord", {r.coord.x, r.coord.y, r.coord.z}},
                     {"setup", to_json(r.setup)},
                     {"precomm", pre},
                     {"postcomm", post},
                     {"dense_store_words", r.dense_store_words},
                     {"scratch_words", r.scratch_words},
                     {"part_nnz", r.part_nnz},
                     {"block_nnz", r.block_nnz},
                     {"gathered_sparse_entries", r.gathered_sparse_entries},
                     {"median_seconds", to_json(r.seconds)}});
  }
  return {{"schema_version", kMetricsSchemaVersion},
          {"kernel", report.kernel},
          {"mode", report.mode},
          {"strategy", report.strategy},
          {"grid", {report.grid.X(), report.grid.Y(), report.grid.Z()}},
          {"K", report.K},
          {"iterations", report.iterations},
          {"ranks", ranks},
          {"aggregate", to_json(report.aggregate())}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.kernel = j.at("kernel");
  r.mode = j.at("mode");
  r.strategy = j.at("strategy");
  const auto& g = j.at("grid");
  r.grid = ProcGrid(g.at(0), g.at(1), g.at(2));
  r.K = j.at("K");
  r.iterations = j.at("iterations");
  for (const auto& jr : j.at("ranks")) {
    RankMetrics m;
    m.rank = jr.at("rank");
    const auto& c = jr.at("coord");
    m.coord = {c.at(0), c.at(1), c.at(2)};
    m.setup = counters_from(jr.at("setup"));
    for (const auto& x : jr.at("precomm")) m.precomm.push_back(counters_from(x));
    for (const auto& x : jr.at("postcomm")) m.postcomm.push_back(counters_from(x));
    m.dense_store_words = jr.at("dense_store_words");
    m.scratch_words = jr.at("scratch_words");
    m.part_nnz = jr.at("part_nnz");
    m.block_nnz = jr.at("block_nnz");
    m.gathered_sparse_entries = jr.at("gathered_sparse_entries");
    const auto& s = jr.at("median_seconds");
    m.seconds = {s.at("setup"), s.at("precomm"), s.at("compute"), s.at("postcomm")};
    r.ranks.push_back(std::move(m));
  }
  return r;
}

Aggregate aggregate_from_json(const nlohmann::json& j) { return report_from_json(j).aggregate(); }

void write_csv_header(std::ostream& out) {
  out << "run,kernel,mode,strategy,grid,K,rank,phase,metric,value\n";
}

void write_csv(std::ostream& out, const std::string& run_id, const MetricsReport& report) {
  const std::string prefix = run_id + "," + report.kernel + "," + report.mode + "," + report.strategy + "," +
                             std::to_string(report.grid.X()) + "x" + std::to_string(report.grid.Y()) + "x" +
                             std::to_string(report.grid.Z()) + "," + std::to_string(report.K) + ",";
  auto row = [&](int rank, const char* phase, const char* metric, auto value) {
    out << prefix << rank << "," << phase << "," << metric << "," << value << "\n";
  };
  auto counters = [&](int rank, const char* phase, const TrafficCounters& c) {
    row(rank, phase, "recv_words", c.recv_words);
    row(rank, phase, "recv_messages", c.recv_messages);
    row(rank, phase, "sent_words", c.sent_words);
    row(rank, phase, "sent_messages", c.sent_messages);
    row(rank, phase, "staging_words", c.staging_words);
  };
  for (const auto& r : report.ranks) {
    counters(r.rank, "setup", r.setup);
    counters(r.rank, "precomm", r.last_precomm());
    counters(r.rank, "postcomm", r.last_postcomm());
    row(r.rank, "setup", "gathered_sparse_entries", r.gathered_sparse_entries);
    row(r.rank, "all", "dense_store_words", r.dense_store_words);
    row(r.rank, "all", "scratch_words", r.scratch_words);
    row(r.rank, "setup", "seconds", r.seconds.setup);
    row(r.rank, "precomm", "seconds", r.seconds.precomm);
    row(r.rank, "compute", "seconds", r.seconds.compute);
    row(r.rank, "postcomm", "seconds", r.seconds.postcomm);
  }
}

}  // namespace spc3d
