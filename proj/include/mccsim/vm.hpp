#pragma once

#include <array>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mccsim/isa.hpp"

namespace mccsim {

struct CpEvent {
  CpEventKind kind = CpEventKind::Start;
  SimTime at = 0;
  /// HostLineWrite/HostLineRead: data-area offset. Dram/DmaCompletion: tag.
  /// Observe: line address.
  std::uint64_t arg = 0;
  std::uint64_t value = 0;  // load result; Observe: 1 for a write
  CacheLine line{};         // HostLineWrite payload
};

enum class VmStatus : std::uint8_t { Idle, Ready, Running, Waiting, Halted, Faulted };

const char* to_string(VmStatus s);

/// Fault codes, also the low 16 bits of the FAULT_INFO control register.
enum class VmFault : std::uint16_t {
  None = 0,
  NotLoaded = 1,
  BadImage = 2,
  Unmapped = 3,
  Permission = 4,
  AffinityViolation = 5,
  IllegalOpcode = 6,
  DivideByZero = 7,
  EventOverflow = 8,
  BadPc = 9,
  UndeclaredEvent = 10,
  BadOperand = 11,
  DuplicateTag = 12,
  UnknownTag = 13,
  BadCommand = 14,
  BadState = 15,
  BadParam = 16,
};

const char* to_string(VmFault f);

struct FaultInfo {
  VmFault code = VmFault::None;
  std::uint32_t pc = 0;
  /// FAULT_INFO layout: code in bits 0..15, pc in bits 16..47.
  std::uint64_t encode() const { return static_cast<std::uint64_t>(code) | (std::uint64_t{pc} << 16); }
};

enum class StepOutcome : std::uint8_t { Yielded, Waiting, Halted, Faulted, BudgetExhausted };

const char* to_string(StepOutcome o);

struct StepResult {
  StepOutcome outcome = StepOutcome::Yielded;
  std::uint64_t executed = 0;  // instructions retired
  std::uint64_t charged = 0;   // cost units billed against the budget
};

/// An asynchronous operation the program hands to its node.
struct MemRequest {
  enum class Op : std::uint8_t { Load64, Load32, Store64, Store32, Dma, DmaZero, SendLine, ReplyLine, Subscribe };
  Op op = Op::Load64;
  std::uint32_t tag = 0;
  std::uint64_t va = 0;      // target / destination
  std::uint64_t src_va = 0;  // DMA source
  std::uint64_t len = 0;
  std::uint64_t value = 0;   // store data
  std::uint64_t data_offset = 0;
  std::optional<CacheLine> line;  // SEND/REPLY sourced from scratch
  SimTime at = 0;
};

struct IssueResult {
  std::optional<VmFault> fault;
  std::uint64_t charge = 0;
};

/// Node services used while stepping. Translation happens at issue; the
/// effect and the completion event follow later.
class VmPort {
 public:
  virtual ~VmPort() = default;
  virtual IssueResult issue(const MemRequest& req) = 0;
};

inline constexpr std::size_t kEventQueueCapacity = 1024;

/// Bytecode interpreter for one MCC. Stepped cooperatively by its node.
class Vm {
 public:
  explicit Vm(std::shared_ptr<const ChannelProgramImage> image);

  /// Resets registers and queues, copies `params`, and makes the VM Ready.
  void start(std::span<const std::uint64_t> params);

  StepResult step(std::uint64_t budget, SimTime start, VmPort& port);

  /// Appends to the FIFO event queue. Returns true when the VM became Ready.
  bool deliver(const CpEvent& ev);
  /// Returns stream credits; true when a credit-blocked VM became Ready.
  bool add_credits(std::uint32_t n);

  VmStatus status() const { return status_; }
  std::uint32_t pc() const { return pc_; }
  std::uint64_t reg(std::size_t i) const { return regs_.at(i); }
  const std::array<std::uint64_t, 16>& regs() const { return regs_; }
  const FaultInfo& fault() const { return fault_; }
  std::uint16_t wait_filter() const { return wait_filter_; }
  std::uint32_t stream_credit() const { return credits_; }
  std::size_t queued_events() const { return events_.size(); }
  std::size_t pending_tags() const { return pending_.size(); }
  bool subscribed() const { return subscribed_; }
  const ChannelProgramImage& image() const { return *image_; }
  std::uint64_t retired() const { return retired_; }

  /// Forces the Faulted state (used for faults detected outside step()).
  void raise(VmFault code);

  std::span<std::uint8_t> scratch();
  static bool in_scratch(std::uint64_t va, std::uint64_t len) {
    return va >= kScratchBase && len <= kScratchBytes && va - kScratchBase <= kScratchBytes - len;
  }

 private:
  struct PendingTag {
    std::uint8_t reg = 0;
    bool load = false;
  };

  StepResult finish(StepResult r, StepOutcome o);
  bool take_stop();
  std::deque<CpEvent>::iterator find_event(std::uint16_t filter);
  std::deque<CpEvent>::iterator find_event(CpEventKind kind, std::uint64_t arg);
  std::optional<CacheLine> scratch_line(std::uint64_t va);
  bool block(std::uint16_t filter);

  std::shared_ptr<const ChannelProgramImage> image_;
  std::vector<std::optional<Instruction>> decoded_;
  std::array<std::uint64_t, 16> regs_{};
  std::array<std::uint64_t, kMaxParams> params_{};
  std::uint32_t pc_ = 0;
  VmStatus status_ = VmStatus::Idle;
  FaultInfo fault_;
  std::uint16_t wait_filter_ = 0;
  std::uint32_t credits_ = 0;
  std::deque<CpEvent> events_;
  std::map<std::uint32_t, PendingTag> pending_;
  std::vector<std::uint8_t> scratch_;
  std::uint32_t recv_slot_ = 0;
  bool subscribed_ = false;
  std::uint64_t retired_ = 0;
};

}  // namespace mccsim
