#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "mccsim/address_space.hpp"
#include "mccsim/interconnect.hpp"
#include "mccsim/sim_core.hpp"
#include "mccsim/vm.hpp"

namespace mccsim {

enum class SchedPolicy : std::uint8_t { RoundRobin, Wfq };

const char* to_string(SchedPolicy p);

struct NodeConfig {
  NodeId id = 0;
  std::uint64_t dram_bytes = 16ull << 20;
  std::uint32_t processors = 1;
  SchedPolicy policy = SchedPolicy::RoundRobin;
  SimTime dram_latency_ns = 0;  // 0 takes SimConfig::node_dram_latency_ns

  void validate() const;
};

/// Control-area register map (byte offsets inside the 4 KiB control segment).
namespace ctl {
inline constexpr std::uint64_t kCmd = 0x000;
inline constexpr std::uint64_t kStatus = 0x008;
inline constexpr std::uint64_t kFaultInfo = 0x010;
inline constexpr std::uint64_t kParamBase = 0x018;
inline constexpr std::uint64_t kUploadBase = 0x100;
inline constexpr std::uint64_t kUploadEnd = 0x1000;
}  // namespace ctl

enum class Cmd : std::uint64_t { Nop = 0, LoadBegin = 1, LoadCommit = 2, Start = 3, Stop = 4, Reset = 5 };

/// Values of the STATUS register.
enum class MccStatus : std::uint64_t { Idle = 0, Loaded = 1, Running = 2, Halted = 3, Faulted = 4, Waiting = 5 };

const char* to_string(MccStatus s);

struct MccStats {
  std::uint64_t instructions = 0;
  std::uint64_t dram_bytes = 0;
  std::uint64_t dma_bytes = 0;
  std::uint64_t stream_lines = 0;
  std::uint64_t quanta = 0;
  SimTime started_at = 0;
  SimTime last_dma_completion = 0;
};

/// One virtual controller hosted on a node.
struct MccInstance {
  MccId id = 0;
  AppId app = 0;
  NodeId affinity = 0;
  ActorId host_actor = kNoActor;
  std::uint32_t weight = 1;

  std::shared_ptr<const ChannelProgramImage> image;
  std::unique_ptr<Vm> vm;
  std::array<std::uint64_t, kMaxParams> params{};
  std::int64_t deficit = 0;

  std::vector<std::uint8_t> upload;
  FaultInfo control_fault;
  std::uint64_t generation = 0;

  bool queued = false;
  bool on_proc = false;
  bool parked = false;
  std::uint64_t enqueued_at = 0;  // node quantum counter at enqueue
  std::uint64_t wait_bound = 0;
  SimTime waiting_since = 0;  // when the VM last entered Waiting

  MccStats stats;

  MccStatus status() const;
};

/// One memory access performed on behalf of an MCC, for isolation checks.
struct AccessRecord {
  enum class Where : std::uint8_t { NodeDram, HostMemory };
  MccId mcc = 0;
  AppId app = 0;
  std::uint64_t va = 0;
  std::uint64_t len = 0;
  bool write = false;
  Where where = Where::NodeDram;
  NodeId node = 0;
  std::uint64_t phys = 0;
};

/// What a node needs from the rest of the system.
struct NodeServices {
  std::function<const AddressSpace*(AppId)> address_space;
  std::function<std::vector<std::uint8_t>&()> host_memory;
  std::function<std::vector<std::uint8_t>*(NodeId)> node_memory;
};

/// A far-memory node: DRAM, physical processors and the MCCs multiplexed on
/// them.
class Node : public Actor, private VmPort {
 public:
  Node(Engine& engine, Interconnect& ic, const SimConfig& sim, NodeConfig cfg);

  NodeId id() const { return cfg_.id; }
  ActorId actor() const { return actor_; }
  const NodeConfig& config() const { return cfg_; }
  SimTime dram_latency() const { return dram_latency_; }
  void bind(NodeServices services) { services_ = std::move(services); }

  /// Reserves `len` bytes of node DRAM and returns their offset.
  std::uint64_t allocate(std::uint64_t len);
  std::vector<std::uint8_t>& dram() { return dram_; }
  const std::vector<std::uint8_t>& dram() const { return dram_; }

  /// Completion time of a DRAM access issued at `at`; no bank model.
  SimTime dram_access(std::uint64_t offset, std::uint64_t len, SimTime at) const;

  void admit(MccInstance inst);
  void remove(MccId id);
  MccInstance* find(MccId id);
  const MccInstance* find(MccId id) const;
  std::vector<MccId> instance_ids() const;
  std::size_t instance_count() const { return instances_.size(); }

  /// Control-area register access, applied at now().
  void control_write(MccId id, std::uint64_t offset, std::uint64_t value);
  std::uint64_t control_read(MccId id, std::uint64_t offset) const;

  /// Test shortcuts equivalent to LOAD_BEGIN/upload/LOAD_COMMIT and START.
  void install(MccId id, std::shared_ptr<const ChannelProgramImage> image);
  void start(MccId id, std::span<const std::uint64_t> params = {});

  void on_event(const SimEvent& ev) override;

  void collect_blocked(std::vector<BlockedMcc>& out) const;

  std::uint64_t quanta() const { return quanta_; }
  std::uint64_t starvation_violations() const { return starvation_violations_; }
  std::uint64_t max_wait_quanta() const { return max_wait_; }
  std::uint64_t resyncs() const { return resyncs_; }

  void set_access_log(bool on) { log_accesses_ = on; }
  const std::vector<AccessRecord>& access_log() const { return access_log_; }

 private:
  struct Processor {
    bool busy = false;
    std::optional<MccId> current;
  };

  enum class Loc : std::uint8_t { NodeDram, RemoteDram, HostMemory, Scratch };
  struct Place {
    Loc loc = Loc::NodeDram;
    NodeId node = 0;
    std::uint64_t offset = 0;  // scratch: offset inside the scratchpad
  };

  struct PendingOp {
    MccId mcc = 0;
    std::uint64_t generation = 0;
    MemRequest req;
    Place dst;
    Place src;
  };

  IssueResult issue(const MemRequest& req) override;

  void dispatch(std::uint32_t proc);
  void make_ready(MccInstance& m);
  void kick();
  bool replica_stale(AppId app) const;
  void park(MccInstance& m);
  void refresh_replica(AppId app);
  void post(MccInstance& m, const CpEvent& ev);
  void command(MccInstance& m, std::uint64_t cmd);

  void on_message(const CoherenceMessage& msg);
  void on_completion(std::uint64_t op, bool dma);
  void reply(const CoherenceMessage& req, MsgKind kind, SimTime at, std::uint64_t value = 0,
             const CacheLine* line = nullptr);

  std::optional<Place> place_of(const Translation& t, std::uint64_t len);
  std::span<std::uint8_t> bytes_at(const Place& p, std::uint64_t len, MccInstance* m);
  SimTime access_latency(const Place& p) const;
  void log_access(const MccInstance& m, const MemRequest& req, std::uint64_t va, std::uint64_t len,
                  bool write, const Place& p);
  std::uint64_t charge_for(SimTime issued, SimTime done) const;

  Engine& engine_;
  Interconnect& ic_;
  const SimConfig& sim_;
  NodeConfig cfg_;
  SimTime dram_latency_;
  ActorId actor_;
  NodeServices services_;

  std::vector<std::uint8_t> dram_;
  std::uint64_t next_free_ = 0;

  std::map<MccId, MccInstance> instances_;
  std::deque<MccId> ready_;
  std::vector<Processor> procs_;
  std::map<AppId, SegmentReplica> replicas_;
  std::map<AppId, std::vector<MccId>> parked_;
  std::set<AppId> sync_in_flight_;
  std::set<MccId> subscribers_;

  std::map<std::uint64_t, PendingOp> pending_;
  std::uint64_t next_op_ = 1;

  // Set while stepping an instance so issue() knows who is asking.
  MccInstance* stepping_ = nullptr;

  std::uint64_t quanta_ = 0;
  std::uint64_t starvation_violations_ = 0;
  std::uint64_t max_wait_ = 0;
  std::uint64_t resyncs_ = 0;

  bool log_accesses_ = false;
  std::vector<AccessRecord> access_log_;
};

}  // namespace mccsim
