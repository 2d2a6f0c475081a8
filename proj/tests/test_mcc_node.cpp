#include <gtest/gtest.h>

#include "mccsim/cp_lang.hpp"
#include "mccsim/host_api.hpp"

using namespace mccsim;

namespace {

struct Outcome {
  MccStatus status = MccStatus::Idle;
  std::uint64_t fault = 0;
  SimTime finished_at = 0;
};

Task<void> load_run_wait(HostApp& app, MccHandle h, std::shared_ptr<const ChannelProgramImage> img,
                         std::vector<std::uint64_t> params, Outcome& out) {
  co_await app.load_program(h, img);
  co_await app.start(h, std::move(params));
  out.status = co_await app.wait_finished(h, 500, 10'000'000);
  out.fault = co_await app.fault_info(h);
}

Outcome run_one(System& sys, HostApp& app, const MccHandle& h, const char* src,
                std::vector<std::uint64_t> params = {}) {
  Outcome out;
  app.spawn(load_run_wait(app, h, assemble_or_throw(src), std::move(params), out));
  sys.run();
  out.finished_at = sys.engine().now();
  return out;
}

VmFault fault_code(std::uint64_t info) { return static_cast<VmFault>(info & 0xFFFF); }

}  // namespace

TEST(Node, ProgramWritesFarMemoryThroughItsSegment) {
  System sys;
  HostApp& app = sys.create_app();
  const Segment seg = app.map_far(0, 4096);
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, R"(
.params 1
.events DRAM
    PARAM 0, r1
    MOV r2, 0x11223344
    SHL r2, r2, 8
    STA 0, [r1], r2
    WAITT 0
    LDW 1, r3, [r1]
    WAITT 1
    ADD r1, r1, 8
    STW 2, [r1], r3
    HALT
)", {seg.base_va});
  EXPECT_EQ(o.status, MccStatus::Halted);
  const auto bytes = app.peek(seg.base_va, 16);
  std::uint64_t w0, w1;
  std::memcpy(&w0, bytes.data(), 8);
  std::memcpy(&w1, bytes.data() + 8, 8);
  EXPECT_EQ(w0, 0x1122334400u);
  EXPECT_EQ(w1, 0x22334400u);
  const auto stats = sys.stats();
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_EQ(stats[0].stats.instructions, 10u);
  EXPECT_EQ(stats[0].stats.dram_bytes, 16u);
}

TEST(Node, DependentLoadsEachPayDramLatency) {
  auto halted_at = [](int loads) {
    System sys;
    HostApp& app = sys.create_app();
    const Segment seg = app.map_far(0, 4096);
    const MccHandle h = app.mcc_create(0);
    std::string src = ".params 1\n.events DRAM\n PARAM 0, r1\n";
    // Same length either way so the upload takes the same time.
    for (int i = 0; i < 3; ++i) src += i < loads ? " LDA 0, r2, [r1]\n WAITT 0\n" : " NOP\n NOP\n";
    src += " HALT\n";
    Outcome o;
    app.spawn(load_run_wait(app, h, assemble_or_throw(src), {seg.base_va}, o));
    for (SimTime t = 0; t < 100'000; ++t) {
      sys.engine().run_until(t);
      if (sys.node(0).find(h.id)->status() == MccStatus::Halted) return t;
    }
    return SimTime{0};
  };
  const SimTime base = halted_at(0);
  const SimTime three = halted_at(3);
  ASSERT_GT(base, 0u);
  // Each load waits out the 80 ns DRAM latency; re-dispatch after the
  // wake-up adds at most a couple of nanoseconds.
  EXPECT_GE(three - base, 3 * 80u);
  EXPECT_LE(three - base, 3 * (80u + 2u));
}

TEST(Node, UnmappedAccessFaultsWithPc) {
  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, ".events DRAM\n MOV r1, 0x300\n LDA 0, r2, [r1]\n WAITT 0\n HALT\n");
  EXPECT_EQ(o.status, MccStatus::Faulted);
  EXPECT_EQ(fault_code(o.fault), VmFault::Unmapped);
  EXPECT_EQ((o.fault >> 16) & 0xFFFF'FFFF, 1u);
}

TEST(Node, ReadOnlySegmentRejectsStores) {
  System sys;
  HostApp& app = sys.create_app();
  const Segment ro = app.map_far(0, 4096, kRead);
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, ".params 1\n.events DRAM\n PARAM 0, r1\n STA 0, [r1], r1\n HALT\n",
                            {ro.base_va});
  EXPECT_EQ(fault_code(o.fault), VmFault::Permission);
  EXPECT_EQ(app.peek(ro.base_va, 8), std::vector<std::uint8_t>(8, 0));
}

TEST(Node, StrictAffinityBlocksOtherNodesMemory) {
  System sys(SimConfig{}, {NodeConfig{0}, NodeConfig{1}});
  HostApp& app = sys.create_app();
  const Segment remote = app.map_far(1, 4096);
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, ".params 1\n.events DRAM\n PARAM 0, r1\n LDA 0, r2, [r1]\n WAITT 0\n HALT\n",
                            {remote.base_va});
  EXPECT_EQ(fault_code(o.fault), VmFault::AffinityViolation);
}

TEST(Node, RelaxedAffinityAllowsRemoteAtLinkCost) {
  SimConfig cfg;
  cfg.strict_affinity = false;
  System sys(cfg, {NodeConfig{0}, NodeConfig{1}});
  HostApp& app = sys.create_app();
  const Segment remote = app.map_far(1, 4096);
  const std::uint64_t magic = 0xFEEDu;
  app.poke(remote.base_va, std::span(reinterpret_cast<const std::uint8_t*>(&magic), 8));
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, R"(
.params 1
.events DRAM
    PARAM 0, r1
    LDA 0, r2, [r1]
    WAITT 0
    MOV r3, 0x7F000000
    STA 1, [r3], r2
    WAITT 1
    HALT
)", {remote.base_va});
  EXPECT_EQ(o.status, MccStatus::Halted);
}

TEST(Node, DivideFaultIsVisibleThroughFaultInfo) {
  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, ".events NONE\n NOP\n NOP\n DIV r1, r1, r0\n");
  EXPECT_EQ(o.status, MccStatus::Faulted);
  EXPECT_EQ(fault_code(o.fault), VmFault::DivideByZero);
  EXPECT_EQ(o.fault >> 16, 2u);
}

Task<void> start_then_stop(HostApp& app, MccHandle h, std::shared_ptr<const ChannelProgramImage> img, MccStatus& mid,
                           MccStatus& end) {
  co_await app.load_program(h, img);
  co_await app.start(h, {});
  co_await app.compute(5000);
  mid = co_await app.status(h);
  co_await app.stop(h);
  end = co_await app.wait_finished(h, 100, 100'000);
}

TEST(Node, StopHaltsAWaitingProgram) {
  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  MccStatus mid{}, end{};
  app.spawn(start_then_stop(app, h, assemble_or_throw(".events HOSTWRITE\n WAIT HOSTWRITE\n HALT\n"), mid, end));
  EXPECT_EQ(sys.run(), RunOutcome::Quiescent);
  EXPECT_EQ(mid, MccStatus::Waiting);
  EXPECT_EQ(end, MccStatus::Halted);
}

TEST(Node, StopHaltsABusyProgram) {
  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  MccStatus mid{}, end{};
  app.spawn(start_then_stop(app, h, assemble_or_throw(".events NONE\nl: ADD r1, r1, 1\n BR l\n"), mid, end));
  EXPECT_EQ(sys.run(), RunOutcome::Quiescent);
  EXPECT_EQ(mid, MccStatus::Running);
  EXPECT_EQ(end, MccStatus::Halted);
}

TEST(Node, DmaZeroAndCopyMoveWholeRanges) {
  System sys;
  HostApp& app = sys.create_app();
  const Segment a = app.map_far(0, 8192);
  const Segment b = app.map_far(0, 8192);
  std::vector<std::uint8_t> pattern(8192);
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = static_cast<std::uint8_t>(i * 31 + 1);
  app.poke(a.base_va, pattern);
  app.poke(b.base_va, std::vector<std::uint8_t>(8192, 0xCC));
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, R"(
.params 2
.events DMA
    PARAM 0, r1
    PARAM 1, r2
    MOV r3, 8192
    DMA 0, r2, r1, r3
    WAITT 0
    DMAZ 1, r1, r3
    WAITT 1
    HALT
)", {a.base_va, b.base_va});
  ASSERT_EQ(o.status, MccStatus::Halted);
  EXPECT_EQ(app.peek(b.base_va, 8192), pattern);
  EXPECT_EQ(app.peek(a.base_va, 8192), std::vector<std::uint8_t>(8192, 0));
  EXPECT_EQ(sys.stats()[0].stats.dma_bytes, 16384u);
}

TEST(Node, DmaRunningPastSegmentEndFaultsWithoutWriting) {
  System sys;
  HostApp& app = sys.create_app();
  const Segment a = app.map_far(0, 4096);
  app.poke(a.base_va, std::vector<std::uint8_t>(4096, 0x11));
  const MccHandle h = app.mcc_create(0);
  const Outcome o = run_one(sys, app, h, ".params 1\n.events DMA\n PARAM 0, r1\n MOV r3, 8192\n DMAZ 0, r1, r3\n WAITT 0\n HALT\n",
                            {a.base_va});
  EXPECT_EQ(fault_code(o.fault), VmFault::Unmapped);
  EXPECT_EQ(app.peek(a.base_va, 4096), std::vector<std::uint8_t>(4096, 0x11));
}

TEST(Node, RoundRobinSharesOneProcessor) {
  System sys;
  HostApp& app = sys.create_app();
  Node& node = sys.node(0);
  const auto busy = assemble_or_throw(".events NONE\nl: ADD r1, r1, 1\n BR l\n");
  std::vector<MccId> ids;
  for (int i = 0; i < 3; ++i) {
    const MccHandle h = app.mcc_create(0);
    node.install(h.id, busy);
    node.start(h.id);
    ids.push_back(h.id);
  }
  sys.run(300'000);
  std::vector<std::uint64_t> counts;
  for (MccId id : ids) counts.push_back(node.find(id)->stats.instructions);
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, SimConfig{}.dispatch_step_budget);
  EXPECT_EQ(node.starvation_violations(), 0u);
}

TEST(Node, ResetReturnsToIdle) {
  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  MccStatus after{};
  app.spawn([](HostApp& a, MccHandle m, MccStatus& s) -> Task<void> {
    co_await a.load_program(m, assemble_or_throw(".events NONE\n HALT\n"));
    co_await a.start(m, {});
    co_await a.wait_finished(m, 100, 100'000);
    co_await a.reset(m);
    s = co_await a.status(m);
  }(app, h, after));
  sys.run();
  EXPECT_EQ(after, MccStatus::Idle);
}
