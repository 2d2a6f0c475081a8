#include <gtest/gtest.h>

#include <sstream>

#include "mccsim/workloads.hpp"

using namespace mccsim;
using namespace mccsim::workloads;

namespace {

CsrGraph triangle() { return CsrGraph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}}); }

}  // namespace

TEST(Programs, AllAssembleWithoutSafetyErrors) {
  for (auto img : {programs::traversal(), programs::gather(), programs::select(), programs::bulk(),
                   programs::access_stats(), programs::busy_loop()}) {
    const SafetyReport rep = check_safety(*img);
    EXPECT_TRUE(rep.ok()) << rep.format();
  }
}

TEST(Programs, WaitNoneIsFlagged) {
  const SafetyReport rep = check_safety(*programs::wait_none());
  EXPECT_TRUE(rep.has(FindingKind::WaitNeverSatisfied));
  EXPECT_FALSE(rep.ok());
}

TEST(Graph, OracleOnTriangle) {
  EXPECT_EQ(common_neighbors_oracle(triangle(), 0, 2, 1), (std::vector<std::uint32_t>{1}));
}

TEST(Graph, EdgeListParsing) {
  std::istringstream in("# vertices 5\n0 1\n1 2 # trailing comment\n\n3 3\n");
  const CsrGraph g = CsrGraph::parse_edge_list(in);
  EXPECT_EQ(g.n, 5u);
  EXPECT_TRUE(g.valid());
  EXPECT_EQ(g.col_indices, (std::vector<std::uint32_t>{1, 0, 2, 1}));
  std::istringstream bad("0 1 2\n");
  EXPECT_THROW(CsrGraph::parse_edge_list(bad), Error);
}

TEST(Graph, RandomBoundedRespectsDegree) {
  std::mt19937_64 rng(3);
  const CsrGraph g = CsrGraph::random_bounded(200, 8, rng);
  ASSERT_TRUE(g.valid());
  for (std::uint32_t v = 0; v < g.n; ++v) EXPECT_LE(g.degree(v), 8u);
}

TEST(Table, ThresholdHitsExactSelectivity) {
  std::mt19937_64 rng(1);
  const Table t = Table::generate(1000, rng);
  for (unsigned pct : {0u, 1u, 50u, 90u, 100u})
    EXPECT_EQ(select_oracle(t, 3, Table::threshold(pct)).size(), pct * 10);
  EXPECT_EQ(Table::from_bytes(t.bytes()).rows, t.rows);
}

TEST(AccessTrace, TopKTiesFavorLowerPage) {
  const auto top = top_k_oracle({2, 5, 5, 1}, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].first, 1u);
  EXPECT_EQ(top[1].first, 2u);
  EXPECT_EQ(top[2].first, 0u);
}

TEST(CommonNeighbors, TriangleOnChannelProgram) {
  CommonNeighborsParams p;
  p.graph = triangle();
  p.queries = {{0, 2}};
  p.hops = 1;
  const auto r = run_common_neighbors(p);
  ASSERT_TRUE(r.oracle_ok) << r.summary;
  ASSERT_EQ(r.results.size(), 1u);
  EXPECT_EQ(r.results[0], (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(r.outcome, RunOutcome::Quiescent);
}

TEST(CommonNeighbors, DisconnectedSourcesShareNothing) {
  CommonNeighborsParams p;
  p.graph = CsrGraph::from_edges(4, {{0, 1}, {2, 3}});
  p.queries = {{0, 3}};
  p.hops = 3;
  for (bool cp : {true, false}) {
    p.use_cp = cp;
    const auto r = run_common_neighbors(p);
    ASSERT_TRUE(r.oracle_ok) << r.summary;
    EXPECT_TRUE(r.results.at(0).empty());
  }
}

TEST(CommonNeighbors, RandomGraphsAllPathsMatchOracle) {
  std::mt19937_64 rng(11);
  CommonNeighborsParams p;
  p.graph = CsrGraph::random_bounded(100, 8, rng);
  p.queries = {{0, 1}, {5, 50}, {99, 42}};
  for (std::uint32_t hops : {1u, 2u, 3u}) {
    p.hops = hops;
    for (int mode = 0; mode < 4; ++mode) {
      p.use_cp = mode != 0;
      p.prefetch = mode == 2;
      p.gather = mode == 3;
      const auto r = run_common_neighbors(p);
      EXPECT_TRUE(r.oracle_ok) << "hops=" << hops << " mode=" << mode << " " << r.summary;
    }
  }
}

TEST(Select, BothModesMatchScan) {
  for (auto mode : {SelectMode::Stream, SelectMode::Materialize}) {
    for (unsigned pct : {0u, 50u, 100u}) {
      SelectParams p;
      p.rows = 300;
      p.selectivity_pct = pct;
      p.mode = mode;
      const auto r = run_select(p);
      EXPECT_TRUE(r.oracle_ok) << r.summary;
    }
  }
}

TEST(Select, CrossoverBetweenStreamAndMaterialize) {
  auto phase = [](unsigned pct, SelectMode m) {
    SelectParams p;
    p.rows = 1000;
    p.selectivity_pct = pct;
    p.mode = m;
    const auto r = run_select(p);
    EXPECT_TRUE(r.oracle_ok) << r.summary;
    return r.phase_ns;
  };
  EXPECT_LT(phase(1, SelectMode::Stream), phase(1, SelectMode::Materialize));
  EXPECT_LT(phase(90, SelectMode::Materialize), phase(90, SelectMode::Stream));
}

TEST(Bulk, ZeroOneMiB) {
  BulkParams p;
  p.kind = BulkKind::Zero;
  p.len = 1 << 20;
  const auto r = run_bulk(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_EQ(r.bytes_verified, p.len);
  EXPECT_GE(r.steps_between, 1u);
}

TEST(Bulk, CopyAndOverlapRejection) {
  BulkParams p;
  p.kind = BulkKind::Copy;
  p.len = 64 * 1024;
  auto r = run_bulk(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_FALSE(r.rejected);
  p.dst_offset = 4096;
  r = run_bulk(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_TRUE(r.rejected);
}

TEST(AccessStats, SmallTraceCountsAndTop1) {
  AccessStatsParams p;
  std::vector<TraceEntry> t;
  for (int i = 0; i < 5; ++i) t.push_back({3, static_cast<std::uint32_t>(i), i % 2 == 0});
  for (int i = 0; i < 2; ++i) t.push_back({7, 1, false});
  p.trace = t;
  p.top_k = 1;
  const auto r = run_access_stats(p);
  ASSERT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_EQ(r.counters[3], 5u);
  EXPECT_EQ(r.counters[7], 2u);
  ASSERT_EQ(r.top_k.size(), 1u);
  EXPECT_EQ(r.top_k[0].first, 3u);
}

TEST(AccessStats, EmptyAndUniformTraces) {
  AccessStatsParams p;
  p.trace = std::vector<TraceEntry>{};
  auto r = run_access_stats(p);
  ASSERT_TRUE(r.oracle_ok) << r.summary;
  for (auto c : r.counters) EXPECT_EQ(c, 0u);

  std::vector<TraceEntry> uniform;
  for (std::uint32_t pg = 0; pg < 16; ++pg) uniform.push_back({pg, 0, false});
  p.trace = uniform;
  p.top_k = 4;
  r = run_access_stats(p);
  ASSERT_TRUE(r.oracle_ok) << r.summary;
  for (std::uint32_t i = 0; i < 4; ++i) EXPECT_EQ(r.top_k.at(i).first, i);
}

TEST(AccessStats, GeneratedTrace) {
  const auto r = run_access_stats({});
  EXPECT_TRUE(r.oracle_ok) << r.summary;
}

TEST(Sched, ShortRoundRobinIsFair) {
  SchedParams p;
  p.weights = {1, 1, 1, 1};
  p.measure_ns = 1'100'000;
  const auto r = run_sched(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
}

TEST(Stress, SmallRunHasNoStarvation) {
  StressParams p;
  p.instances = 100;
  p.run_ns = 300'000;
  const auto r = run_stress(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_GT(r.faulted, 0u);
}

TEST(Fuzz, SmallBatchStaysIsolated) {
  FuzzParams p;
  p.programs = 200;
  const auto r = run_fuzz(p);
  EXPECT_TRUE(r.oracle_ok) << r.summary;
  EXPECT_EQ(r.runs, 200u);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GT(r.fuzz_accesses, 0u) << "random programs should reach memory now and then";
}

TEST(RandomImage, HeaderAlwaysValidates) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto img = random_image(rng, {0x1000'0000});
    const auto bytes = img.serialize();
    EXPECT_TRUE(ChannelProgramImage::parse(bytes).image.has_value());
  }
}

TEST(Program, WaitNoneDeadlocks) {
  const auto r = run_program({programs::wait_none(), {}});
  EXPECT_EQ(r.outcome, RunOutcome::Deadlock);
}

TEST(Determinism, SameSeedSameHash) {
  SelectParams p;
  p.rows = 200;
  EXPECT_EQ(run_select(p).trace_hash, run_select(p).trace_hash);
}
