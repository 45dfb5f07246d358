#include <gtest/gtest.h>

#include <sstream>

#include "spcomm3d/engine.hpp"
#include "spcomm3d/metrics.hpp"

using namespace spc3d;

namespace {

MetricsReport synthetic() {
  MetricsReport r;
  r.kernel = "sddmm";
  r.mode = "sparse";
  r.strategy = "nb";
  r.grid = ProcGrid(2, 1, 1);
  r.K = 4;
  r.iterations = 2;
  for (int k = 0; k < 2; ++k) {
    RankMetrics m;
    m.rank = k;
    m.coord = {k, 0, 0};
    TrafficCounters first, last;
    first.recv_words = 1000;
    last.recv_words = 10 + 30 * static_cast<std::uint64_t>(k);
    last.recv_messages = 1 + static_cast<std::uint64_t>(k);
    last.staging_words = 5;
    m.precomm = {first, last};
    TrafficCounters post;
    post.recv_words = 7;
    post.staging_words = 2;
    m.postcomm = {post, post};
    m.dense_store_words = 100 + static_cast<std::uint64_t>(k);
    m.gathered_sparse_entries = 3;
    m.seconds = {0.5 * (k + 1), 0.25, 0.125 * (2 - k), 0.0};
    r.ranks.push_back(m);
  }
  return r;
}

}  // namespace

TEST(Metrics, Median) {
  EXPECT_EQ(median({}), 0.0);
  EXPECT_EQ(median({3.0}), 3.0);
  EXPECT_EQ(median({5.0, 1.0, 3.0}), 3.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(Metrics, AggregateUsesLastIteration) {
  const auto a = synthetic().aggregate();
  EXPECT_EQ(a.precomm_recv_sum, 50u);
  EXPECT_EQ(a.precomm_recv_max, 40u);
  EXPECT_EQ(a.precomm_recv_avg, 25.0);
  EXPECT_EQ(a.max_recv_k_normalized, 10.0);
  EXPECT_EQ(a.postcomm_recv_sum, 14u);
  EXPECT_EQ(a.postcomm_recv_max, 7u);
  EXPECT_EQ(a.precomm_messages, 3u);
  EXPECT_EQ(a.staging_sum, 14u);
  EXPECT_EQ(a.dense_store_sum, 201u);
  EXPECT_EQ(a.dense_store_max, 101u);
  EXPECT_EQ(a.gathered_sparse_entries, 6u);
  EXPECT_EQ(a.seconds.setup, 1.0);
  EXPECT_EQ(a.seconds.compute, 0.25);
}

TEST(Metrics, JsonCarriesSchemaAndShape) {
  const auto j = to_json(synthetic());
  EXPECT_EQ(j.at("schema_version"), kMetricsSchemaVersion);
  EXPECT_EQ(j.at("grid"), nlohmann::json({2, 1, 1}));
  EXPECT_EQ(j.at("ranks").size(), 2u);
  EXPECT_EQ(j.at("ranks")[1].at("precomm").size(), 2u);
  EXPECT_EQ(j.at("ranks")[1].at("coord"), nlohmann::json({1, 0, 0}));
  EXPECT_EQ(j.at("aggregate").at("precomm_recv_sum"), 50u);
}

TEST(Metrics, AggregateRebuildsFromSerializedRanks) {
  const auto r = synthetic();
  const auto j = nlohmann::json::parse(to_json(r).dump());
  EXPECT_EQ(aggregate_from_json(j), r.aggregate());
}

TEST(Metrics, EngineReportAggregatesMatchRankSums) {
  const auto S = gen_rmat(7, 600, 3);
  KernelConfig cfg;
  cfg.grid = ProcGrid(2, 2, 2);
  cfg.K = 8;
  Engine eng(S, random_dense(S.nrows(), 8, 1), random_dense(S.ncols(), 8, 2), cfg);
  for (Kernel k : {Kernel::sddmm, Kernel::spmm}) {
    const auto res = eng.run(k, Mode::sparse, 2);
    const auto& rep = res.metrics;
    ASSERT_EQ(rep.ranks.size(), 8u);
    std::uint64_t pre = 0, post = 0, store = 0;
    for (const auto& r : rep.ranks) {
      ASSERT_EQ(r.precomm.size(), 2u);
      EXPECT_EQ(r.precomm[0], r.precomm[1]);
      pre += r.last_precomm().recv_words;
      post += r.last_postcomm().recv_words;
      store += r.dense_store_words;
    }
    const auto a = rep.aggregate();
    EXPECT_EQ(a.precomm_recv_sum, pre);
    EXPECT_EQ(a.postcomm_recv_sum, post);
    EXPECT_EQ(a.dense_store_sum, store);
    EXPECT_EQ(aggregate_from_json(nlohmann::json::parse(to_json(rep).dump())), a);
  }
}

TEST(Metrics, CsvRows) {
  std::ostringstream out;
  write_csv_header(out);
  write_csv(out, "r1", synthetic());
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "run,kernel,mode,strategy,grid,K,rank,phase,metric,value");
  int rows = 0;
  bool found = false;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("r1,sddmm,sparse,nb,2x1x1,4,", 0), 0u) << line;
    if (line == "r1,sddmm,sparse,nb,2x1x1,4,1,precomm,recv_words,40") found = true;
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(rows, 2 * (15 + 7));
}
