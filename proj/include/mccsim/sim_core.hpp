#pragma once

#include <functional>
#include <iosfwd>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "mccsim/common.hpp"
#include "mccsim/message.hpp"

namespace mccsim {

struct MessageDelivery {
  CoherenceMessage msg;
};
struct DramCompletion {
  MccId mcc = 0;
  std::uint64_t op = 0;
};
struct DmaCompletion {
  MccId mcc = 0;
  std::uint64_t op = 0;
};
struct DispatchQuantum {
  std::uint32_t processor = 0;
};
struct HostScriptStep {
  std::uint64_t token = 0;
};
/// A node finished pulling a fresh segment table for `app`.
struct SegmentSync {
  AppId app = 0;
};

using EventPayload = std::variant<MessageDelivery, DramCompletion, DmaCompletion, DispatchQuantum,
                                  HostScriptStep, SegmentSync>;

enum class EventKind : std::uint8_t {
  MessageDelivery,
  DramCompletion,
  DmaCompletion,
  DispatchQuantum,
  HostScriptStep,
  SegmentSync,
};

const char* to_string(EventKind k);

struct SimEvent {
  SimTime at = 0;
  std::uint64_t seq = 0;
  ActorId target = kNoActor;
  EventPayload payload;

  EventKind kind() const { return static_cast<EventKind>(payload.index()); }
};

struct EventHandle {
  SimTime at = 0;
  std::uint64_t seq = 0;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void on_event(const SimEvent& ev) = 0;
};

enum class RunOutcome { Quiescent, LimitReached, Deadlock };

const char* to_string(RunOutcome o);

/// System-wide timing knobs. Defaults sit inside the latency and bandwidth
/// ranges measured on current CXL memory devices.
struct SimConfig {
  std::uint64_t seed = 1;
  SimTime far_base_latency_ns = 250;
  SimTime per_hop_latency_ns = 300;
  std::uint32_t hops = 0;
  std::uint64_t far_bandwidth_bytes_per_us = 52'000;  // 52 GB/s
  SimTime node_dram_latency_ns = 80;
  SimTime host_dram_latency_ns = 100;
  std::uint64_t dispatch_step_budget = 256;
  SimTime watchdog_ns = 1'000'000;

  bool strict_affinity = true;
  std::uint64_t wfq_quantum = 256;
  SimTime host_cache_hit_ns = 1;
  std::uint64_t host_memory_bytes = 64ull << 20;

  /// Throws Error{BadConfig} when an invariant is violated.
  void validate() const;
};

/// An MCC blocked on an event, and the simulated time it started waiting.
struct BlockedMcc {
  MccId id = 0;
  SimTime since = 0;
};

/// Collects MCCs that are blocked waiting for an event. The engine asks
/// every registered probe when its queue runs dry; the watchdog then fires
/// `watchdog_ns` after the earliest of them blocked.
using BlockedProbe = std::function<void(std::vector<BlockedMcc>&)>;

/// Single-queue deterministic discrete-event engine.
class Engine {
 public:
  explicit Engine(std::uint64_t seed = 1, SimTime watchdog_ns = 1'000'000);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  ActorId add_actor(Actor& actor, std::string name);
  const std::string& actor_name(ActorId id) const { return names_.at(id); }

  EventHandle schedule(SimTime at, ActorId target, EventPayload payload);
  EventHandle schedule_in(SimTime delay, ActorId target, EventPayload payload) {
    return schedule(now_ + delay, target, std::move(payload));
  }
  /// Returns false when the event was already processed or cancelled.
  bool cancel(const EventHandle& h);

  RunOutcome run_until(SimTime limit);
  SimTime now() const { return now_; }

  std::size_t pending() const { return queue_.size() - cancelled_.size(); }
  std::uint64_t processed() const { return processed_; }
  std::uint64_t scheduled() const { return next_seq_; }
  std::uint64_t cancelled_total() const { return cancelled_total_; }

  void add_blocked_probe(BlockedProbe probe) { probes_.push_back(std::move(probe)); }
  const std::vector<MccId>& deadlock_suspects() const { return suspects_; }
  SimTime watchdog_ns() const { return watchdog_ns_; }

  std::mt19937_64& rng() { return rng_; }

  /// FNV-1a over every processed event; equal for equal runs.
  std::uint64_t trace_hash() const { return hash_; }
  /// One line per processed event when set.
  void set_trace(std::ostream* out) { trace_ = out; }
  std::string describe(const SimEvent& ev) const;

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void record(const SimEvent& ev);

  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  std::vector<Actor*> actors_;
  std::vector<std::string> names_;
  std::vector<BlockedProbe> probes_;
  std::vector<MccId> suspects_;
  std::mt19937_64 rng_;
  SimTime now_ = 0;
  SimTime watchdog_ns_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::uint64_t cancelled_total_ = 0;
  std::uint64_t current_seq_ = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
  std::ostream* trace_ = nullptr;
};

}  // namespace mccsim
