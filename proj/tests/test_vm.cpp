#include <gtest/gtest.h>

#include "mccsim/cp_lang.hpp"
#include "mccsim/vm.hpp"

using namespace mccsim;

namespace {

struct RecordingPort : VmPort {
  std::vector<MemRequest> requests;
  std::optional<VmFault> fail_with;
  std::uint64_t charge = 0;

  IssueResult issue(const MemRequest& req) override {
    requests.push_back(req);
    return {fail_with, charge};
  }
};

Vm loaded(const char* src, std::vector<std::uint64_t> params = {}) {
  Vm vm(assemble_or_throw(src));
  vm.start(params);
  return vm;
}

}  // namespace

TEST(Vm, ArithmeticAndHalt) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events NONE
    MOV r1, 7
    MOV r2, 3
    MUL r3, r1, r2
    SUB r4, r3, 1
    DIV r5, r4, r2
    REM r6, r4, r2
    SHL r7, r1, 4
    XOR r8, r7, 0xF0
    HALT
)");
  const StepResult r = vm.step(100, 0, port);
  EXPECT_EQ(r.outcome, StepOutcome::Halted);
  EXPECT_EQ(r.executed, 9u);
  EXPECT_EQ(vm.reg(3), 21u);
  EXPECT_EQ(vm.reg(5), 6u);
  EXPECT_EQ(vm.reg(6), 2u);
  EXPECT_EQ(vm.reg(7), 112u);
  EXPECT_EQ(vm.reg(8), 112u ^ 0xF0u);
  EXPECT_EQ(vm.status(), VmStatus::Halted);
}

TEST(Vm, ImmediatesAreSignExtendedAndBranchesUnsigned) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events NONE
    MOV r1, -1
    MOV r2, 1
    MOV r3, 0
    BLT r1, r2, less
    MOV r3, 5
less:
    CMP r4, r1, r2
    HALT
)");
  vm.step(100, 0, port);
  EXPECT_EQ(vm.reg(1), ~std::uint64_t{0});
  EXPECT_EQ(vm.reg(3), 5u) << "0xFFFF...F is not below 1 unsigned";
  EXPECT_EQ(vm.reg(4), 1u);
}

TEST(Vm, DivideByZeroFaultsWithPc) {
  RecordingPort port;
  Vm vm = loaded(".events NONE\n MOV r1, 4\n DIV r2, r1, r0\n HALT\n");
  EXPECT_EQ(vm.step(100, 0, port).outcome, StepOutcome::Faulted);
  EXPECT_EQ(vm.fault().code, VmFault::DivideByZero);
  EXPECT_EQ(vm.fault().pc, 1u);
  EXPECT_EQ(vm.fault().encode(), 7u | (1u << 16));
}

TEST(Vm, IllegalWordAndRunningOffTheEndFault) {
  RecordingPort port;
  Vm bad = loaded(".events NONE\n .word 0xEE\n");
  bad.step(10, 0, port);
  EXPECT_EQ(bad.fault().code, VmFault::IllegalOpcode);

  Vm off = loaded(".events NONE\n NOP\n");
  off.step(10, 0, port);
  EXPECT_EQ(off.fault().code, VmFault::BadPc);
}

TEST(Vm, BudgetBoundsAQuantum) {
  RecordingPort port;
  Vm vm = loaded(".events NONE\nspin:\n ADD r1, r1, 1\n BR spin\n");
  const StepResult r = vm.step(10, 0, port);
  EXPECT_EQ(r.outcome, StepOutcome::BudgetExhausted);
  EXPECT_EQ(r.executed, 10u);
  EXPECT_EQ(vm.reg(1), 5u);
  EXPECT_EQ(vm.status(), VmStatus::Ready);
}

TEST(Vm, YieldReturnsReady) {
  RecordingPort port;
  Vm vm = loaded(".events NONE\n YIELD\n HALT\n");
  EXPECT_EQ(vm.step(10, 0, port).outcome, StepOutcome::Yielded);
  EXPECT_EQ(vm.step(10, 0, port).outcome, StepOutcome::Halted);
}

TEST(Vm, LoadIssuesAndCompletesThroughWaitt) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events DRAM
    MOV r1, 0x10000000
    LDA 3, r2, [r1]
    WAITT 3
    HALT
)");
  EXPECT_EQ(vm.step(100, 50, port).outcome, StepOutcome::Waiting);
  ASSERT_EQ(port.requests.size(), 1u);
  EXPECT_EQ(port.requests[0].op, MemRequest::Op::Load64);
  EXPECT_EQ(port.requests[0].va, 0x1000'0000u);
  EXPECT_EQ(port.requests[0].tag, 3u);
  EXPECT_EQ(port.requests[0].at, 51u);
  EXPECT_EQ(vm.pending_tags(), 1u);

  // A completion for another tag wakes the VM, which re-checks and blocks again.
  EXPECT_TRUE(vm.deliver({CpEventKind::DramCompletion, 90, 4, 1, {}}));
  EXPECT_EQ(vm.step(100, 90, port).outcome, StepOutcome::Waiting);
  EXPECT_TRUE(vm.deliver({CpEventKind::DramCompletion, 100, 3, 0xBEEF, {}}));
  EXPECT_EQ(vm.step(100, 100, port).outcome, StepOutcome::Halted);
  EXPECT_EQ(vm.reg(2), 0xBEEFu);
  EXPECT_EQ(vm.pending_tags(), 0u);
}

TEST(Vm, ScratchAccessesStayLocalButStillCompleteByTag) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events DRAM
    MOV r1, 0x7F000040
    MOV r2, 99
    STA 1, [r1], r2
    WAITT 1
    LDA 2, r3, [r1]
    WAITT 2
    HALT
)");
  EXPECT_EQ(vm.step(100, 0, port).outcome, StepOutcome::Halted);
  EXPECT_TRUE(port.requests.empty());
  EXPECT_EQ(vm.reg(3), 99u);
}

TEST(Vm, TagMisuseFaults) {
  RecordingPort port;
  Vm dup = loaded(".events DRAM\n MOV r1, 0x10000000\n LDA 1, r2, [r1]\n LDA 1, r3, [r1]\n HALT\n");
  dup.step(100, 0, port);
  EXPECT_EQ(dup.fault().code, VmFault::DuplicateTag);

  Vm unknown = loaded(".events DRAM\n WAITT 9\n HALT\n");
  unknown.step(100, 0, port);
  EXPECT_EQ(unknown.fault().code, VmFault::UnknownTag);
}

TEST(Vm, PortFaultsBecomeVmFaults) {
  RecordingPort port;
  port.fail_with = VmFault::Permission;
  Vm vm = loaded(".events DRAM\n MOV r1, 0x10000000\n STA 1, [r1], r2\n HALT\n");
  vm.step(100, 0, port);
  EXPECT_EQ(vm.status(), VmStatus::Faulted);
  EXPECT_EQ(vm.fault().code, VmFault::Permission);
}

TEST(Vm, WaitDoesNotConsumeAndReportsKind) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events HOSTWRITE
    WAIT r1, r2, HOSTWRITE
    RECV_LINE 128, r3
    HALT
)");
  EXPECT_EQ(vm.step(100, 0, port).outcome, StepOutcome::Waiting);
  CpEvent ev{CpEventKind::HostLineWrite, 10, 128, 0, CacheLine::filled(0x5A)};
  EXPECT_TRUE(vm.deliver(ev));
  EXPECT_EQ(vm.step(100, 10, port).outcome, StepOutcome::Halted);
  EXPECT_EQ(vm.reg(1), static_cast<std::uint64_t>(CpEventKind::HostLineWrite));
  EXPECT_EQ(vm.reg(2), 128u);
  EXPECT_EQ(vm.reg(3), kScratchBase);
  EXPECT_EQ(vm.scratch()[0], 0x5A);
  EXPECT_EQ(vm.queued_events(), 0u);
}

TEST(Vm, WaitOnUndeclaredEventFaults) {
  RecordingPort port;
  Vm vm = loaded(".events HOSTWRITE\n .word 0x0000001000000040\n HALT\n");
  vm.step(100, 0, port);
  EXPECT_EQ(vm.fault().code, VmFault::UndeclaredEvent);
}

TEST(Vm, SendLineSpendsCreditsAndBlocksWithoutThem) {
  RecordingPort port;
  Vm vm = loaded(R"(
.events NONE
.credits 2
    MOV r1, 0x7F000000
loop:
    SEND_LINE 0, r1
    BR loop
)");
  EXPECT_EQ(vm.stream_credit(), 2u);
  EXPECT_EQ(vm.step(100, 0, port).outcome, StepOutcome::Waiting);
  EXPECT_EQ(port.requests.size(), 2u);
  EXPECT_EQ(vm.wait_filter(), kCreditWakeBit);
  EXPECT_TRUE(vm.add_credits(1));
  EXPECT_EQ(vm.step(100, 0, port).outcome, StepOutcome::Waiting);
  EXPECT_EQ(port.requests.size(), 3u);
  ASSERT_TRUE(port.requests.back().line.has_value());
}

TEST(Vm, MisalignedDataOffsetFaults) {
  RecordingPort port;
  Vm vm = loaded(".events NONE\n SEND_LINE 8, r1\n HALT\n");
  vm.step(100, 0, port);
  EXPECT_EQ(vm.fault().code, VmFault::BadOperand);
}

TEST(Vm, ParamsAndBadParam) {
  RecordingPort port;
  Vm vm = loaded(".params 2\n.events NONE\n PARAM 1, r4\n HALT\n", {11, 22});
  vm.step(10, 0, port);
  EXPECT_EQ(vm.reg(4), 22u);

  Vm bad = loaded(".params 1\n.events NONE\n .word 0x0000000500000046\n HALT\n", {1});
  bad.step(10, 0, port);
  EXPECT_EQ(bad.fault().code, VmFault::BadParam);
}

TEST(Vm, StopWakesAWaitingProgramAndHaltsIt) {
  RecordingPort port;
  Vm vm = loaded(".events HOSTWRITE|STOP\n WAIT HOSTWRITE\n HALT\n");
  EXPECT_EQ(vm.step(10, 0, port).outcome, StepOutcome::Waiting);
  EXPECT_TRUE(vm.deliver({CpEventKind::Stop, 5, 0, 0, {}}));
  EXPECT_EQ(vm.step(10, 5, port).outcome, StepOutcome::Halted);
}

TEST(Vm, EventQueueOverflowFaults) {
  Vm vm = loaded(".events HOSTWRITE\n WAIT HOSTWRITE\n HALT\n");
  for (std::size_t i = 0; i < kEventQueueCapacity; ++i) vm.deliver({CpEventKind::Observe, 0, 0, 0, {}});
  vm.deliver({CpEventKind::Observe, 0, 0, 0, {}});
  EXPECT_EQ(vm.status(), VmStatus::Faulted);
  EXPECT_EQ(vm.fault().code, VmFault::EventOverflow);
}

TEST(Vm, StatNextPacksWriteBit) {
  RecordingPort port;
  Vm vm = loaded(".events OBSERVE\n STAT_SUB\n STAT_NEXT r1\n HALT\n");
  EXPECT_EQ(vm.step(10, 0, port).outcome, StepOutcome::Waiting);
  EXPECT_TRUE(vm.subscribed());
  vm.deliver({CpEventKind::Observe, 3, 0x1000'0040, 1, {}});
  vm.step(10, 3, port);
  EXPECT_EQ(vm.reg(1), 0x1000'0041u);
}
