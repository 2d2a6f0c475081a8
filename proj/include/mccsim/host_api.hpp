#pragma once

#include <coroutine>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mccsim/address_space.hpp"
#include "mccsim/interconnect.hpp"
#include "mccsim/mcc_node.hpp"
#include "mccsim/sim_core.hpp"
#include "mccsim/task.hpp"

namespace mccsim {

inline constexpr std::uint64_t kPageBytes = 4096;

/// Host-side view of one MCC: where its two areas live in the app's space.
struct MccHandle {
  MccId id = 0;
  NodeId node = 0;
  AppId app = 0;
  std::uint64_t control_va = 0;
  std::uint64_t data_va = 0;
};

/// A host access that failed translation.
class AccessFault : public Error {
 public:
  AccessFault(FaultKind kind, std::uint64_t va)
      : Error(Errc::Fault, std::string("access fault (") + to_string(kind) + ") at VA " + std::to_string(va)),
        kind_(kind),
        va_(va) {}
  FaultKind kind() const { return kind_; }
  std::uint64_t va() const { return va_; }

 private:
  FaultKind kind_;
  std::uint64_t va_;
};

class System;

/// One application: its address space, its mailboxes and the scripted
/// driver that plays the CPU.
class HostApp : public Actor {
 public:
  HostApp(System& sys, AppId id);

  AppId id() const { return id_; }
  const SimConfig& config() const;
  ActorId actor() const { return actor_; }
  AddressSpace& address_space() { return as_; }
  const AddressSpace& address_space() const { return as_; }

  // Kernel calls. They complete instantly.
  Segment map_far(NodeId node, std::uint64_t len, std::uint8_t perms = kReadWrite);
  Segment map_host(std::uint64_t len, std::uint8_t perms = kReadWrite);
  MccHandle mcc_create(NodeId node, std::uint32_t weight = 1);
  void mcc_destroy(const MccHandle& h);
  /// Revokes a mapping; completes once every node holds a fresh table.
  Task<void> unmap(std::uint64_t base_va);

  // Untimed access for setup and verification.
  std::vector<std::uint8_t> peek(std::uint64_t va, std::uint64_t len) const;
  void poke(std::uint64_t va, std::span<const std::uint8_t> bytes);

  Task<void> compute(SimTime ns);

  Task<CacheLine> far_read_line(std::uint64_t va);
  Task<void> far_write_line(std::uint64_t va, CacheLine line);
  Task<std::vector<std::uint8_t>> far_read(std::uint64_t va, std::uint64_t len);
  Task<void> far_write(std::uint64_t va, std::vector<std::uint8_t> bytes);

  Task<std::uint64_t> mmio_read(std::uint64_t va);
  Task<void> mmio_write(std::uint64_t va, std::uint64_t value);

  /// Blocking load from the data area: a streamed line is a cache hit,
  /// otherwise the CP is asked and the script stalls until it answers.
  Task<CacheLine> data_read(std::uint64_t va);
  /// Posted store into the data area.
  void data_write(std::uint64_t va, const CacheLine& line);
  /// Non-blocking check of the mailbox; consumes the line when present.
  Task<std::optional<CacheLine>> data_poll(std::uint64_t va);
  /// Spins on a data-area line until the CP streams into it.
  Task<CacheLine> data_wait(std::uint64_t va, SimTime timeout);

  Task<std::vector<std::uint8_t>> local_read(std::uint64_t va, std::uint64_t len);
  Task<void> local_write(std::uint64_t va, std::vector<std::uint8_t> bytes);

  // Control-area helpers.
  Task<void> load_program(MccHandle h, std::shared_ptr<const ChannelProgramImage> image);
  Task<void> start(MccHandle h, std::vector<std::uint64_t> params);
  Task<void> stop(MccHandle h);
  Task<void> reset(MccHandle h);
  Task<MccStatus> status(MccHandle h);
  Task<std::uint64_t> fault_info(MccHandle h);
  /// Polls STATUS until Halted or Faulted or `timeout` passes.
  Task<MccStatus> wait_finished(MccHandle h, SimTime poll_ns, SimTime timeout);

  void spawn(Task<void> script);
  bool script_done() const { return !script_.valid() || script_.done(); }
  void rethrow_if_failed() const { script_.rethrow_if_failed(); }
  std::uint64_t script_steps() const { return steps_; }

  void on_event(const SimEvent& ev) override;

 private:
  enum class WaitKind : std::uint8_t { None, Response, Timer, Mailbox, SyncAcks };

  struct Pending {
    WaitKind kind = WaitKind::None;
    TargetKind target = TargetKind::None;
    MsgKind expect = MsgKind::Ack;
    std::uint64_t line_addr = 0;
    std::uint64_t token = 0;
    MccId mcc = 0;
    std::uint64_t offset = 0;
    std::uint32_t acks_left = 0;
    std::optional<EventHandle> timeout;
    std::uint64_t timeout_token = 0;
    bool timed_out = false;
    CoherenceMessage response;
  };

  struct Mailbox {
    CacheLine line;
    bool full = false;
    bool streamed = false;
  };

  struct Park {
    HostApp* app;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) noexcept { app->waiter_ = h; }
    void await_resume() const noexcept {}
  };

  Translation translate_or_throw(std::uint64_t va, std::uint64_t len, Access a) const;
  Node& node_of(MccId mcc) const;
  void begin(WaitKind kind);
  void arm_timeout(SimTime timeout);
  void wake();
  CoherenceMessage request(MsgKind kind, TargetKind target, NodeId node, std::uint64_t line_addr) const;
  CacheLine consume(Mailbox& mb, MccId mcc);
  void send_credit(MccId mcc);
  void on_message(const CoherenceMessage& msg);

  System& sys_;
  AppId id_;
  ActorId actor_;
  AddressSpace as_;

  Task<void> script_;
  std::coroutine_handle<> waiter_;
  Pending pending_;
  std::uint64_t next_token_ = 1;
  std::uint64_t start_token_ = 0;
  std::uint64_t steps_ = 0;

  std::map<std::pair<MccId, std::uint64_t>, Mailbox> mailboxes_;
  std::map<MccId, NodeId> mcc_nodes_;
};

struct MccStatsRow {
  MccId mcc = 0;
  AppId app = 0;
  NodeId node = 0;
  MccStats stats;
  MccStatus status = MccStatus::Idle;
};

/// Host, interconnect and far-memory nodes wired to one engine.
class System {
 public:
  explicit System(SimConfig cfg = {}, std::vector<NodeConfig> nodes = {NodeConfig{}});
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  Engine& engine() { return engine_; }
  Interconnect& interconnect() { return ic_; }
  const SimConfig& config() const { return cfg_; }
  LinkConfig link(NodeId node) const { return ic_.config(kHostPort, node); }

  Node& node(NodeId id) const;
  std::vector<NodeId> node_ids() const;

  HostApp& create_app();
  HostApp& app(AppId id) const { return *apps_.at(id); }
  std::size_t app_count() const { return apps_.size(); }

  /// Runs the engine and rethrows the first failed driver script.
  RunOutcome run(SimTime limit = kForever);

  std::vector<std::uint8_t>& host_memory() { return host_mem_; }
  std::uint64_t allocate_host(std::uint64_t len);
  MccId next_mcc_id() { return next_mcc_++; }
  const AddressSpace* address_space(AppId app) const;

  std::vector<MccStatsRow> stats() const;

 private:
  SimConfig cfg_;
  Engine engine_;
  Interconnect ic_;
  std::map<NodeId, std::unique_ptr<Node>> nodes_;
  std::vector<std::unique_ptr<HostApp>> apps_;
  std::vector<std::uint8_t> host_mem_;
  MccId next_mcc_ = 1;
};

}  // namespace mccsim
