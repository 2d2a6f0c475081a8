#include "mccsim/sim_core.hpp"

#include <ostream>
#include <sstream>

namespace mccsim {

namespace {

constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

template <typename T>
void fnv_value(std::uint64_t& h, const T& v) {
  fnv(h, &v, sizeof(v));
}

}  // namespace

const char* to_string(Errc e) {
  switch (e) {
    case Errc::SchedulingInPast: return "SchedulingInPast";
    case Errc::BadLength: return "BadLength";
    case Errc::BadConfig: return "BadConfig";
    case Errc::OutOfFarMemory: return "OutOfFarMemory";
    case Errc::OutOfHostMemory: return "OutOfHostMemory";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::UnknownMcc: return "UnknownMcc";
    case Errc::AffinityMismatch: return "AffinityMismatch";
    case Errc::DuplicateMcc: return "DuplicateMcc";
    case Errc::BadImage: return "BadImage";
    case Errc::ReadTimeout: return "ReadTimeout";
    case Errc::Fault: return "Fault";
    case Errc::ScriptBusy: return "ScriptBusy";
  }
  return "?";
}

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::LoadReq: return "LoadReq";
    case MsgKind::StoreReq: return "StoreReq";
    case MsgKind::DataResp: return "DataResp";
    case MsgKind::Ack: return "Ack";
    case MsgKind::ObserveNotify: return "ObserveNotify";
  }
  return "?";
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::MessageDelivery: return "MessageDelivery";
    case EventKind::DramCompletion: return "DramCompletion";
    case EventKind::DmaCompletion: return "DmaCompletion";
    case EventKind::DispatchQuantum: return "DispatchQuantum";
    case EventKind::HostScriptStep: return "HostScriptStep";
    case EventKind::SegmentSync: return "SegmentSync";
  }
  return "?";
}

const char* to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::Quiescent: return "Quiescent";
    case RunOutcome::LimitReached: return "LimitReached";
    case RunOutcome::Deadlock: return "Deadlock";
  }
  return "?";
}

void SimConfig::validate() const {
  auto fail = [](const char* what) { throw Error(Errc::BadConfig, what); };
  if (far_base_latency_ns == 0) fail("far_base_latency_ns must be > 0");
  if (per_hop_latency_ns == 0) fail("per_hop_latency_ns must be > 0");
  if (far_bandwidth_bytes_per_us == 0) fail("far_bandwidth_bytes_per_us must be > 0");
  if (node_dram_latency_ns == 0) fail("node_dram_latency_ns must be > 0");
  if (host_dram_latency_ns == 0) fail("host_dram_latency_ns must be > 0");
  if (dispatch_step_budget == 0) fail("dispatch_step_budget must be >= 1");
  if (watchdog_ns == 0) fail("watchdog_ns must be > 0");
  if (wfq_quantum == 0) fail("wfq_quantum must be >= 1");
  if (host_memory_bytes == 0 || !is_line_aligned(host_memory_bytes))
    fail("host_memory_bytes must be a positive multiple of 64");
}

Engine::Engine(std::uint64_t seed, SimTime watchdog_ns) : rng_(seed), watchdog_ns_(watchdog_ns) {}

ActorId Engine::add_actor(Actor& actor, std::string name) {
  actors_.push_back(&actor);
  names_.push_back(std::move(name));
  return static_cast<ActorId>(actors_.size() - 1);
}

EventHandle Engine::schedule(SimTime at, ActorId target, EventPayload payload) {
  if (at < now_) {
    throw Error(Errc::SchedulingInPast, "event at " + std::to_string(at) + " scheduled at now=" +
                                            std::to_string(now_));
  }
  if (at >= kTimeCap) throw Error(Errc::SchedulingInPast, "event time beyond 2^63");
  if (target >= actors_.size()) throw Error(Errc::OutOfRange, "unknown actor");
  SimEvent ev{at, next_seq_++, target, std::move(payload)};
  EventHandle h{ev.at, ev.seq};
  queue_.push(std::move(ev));
  return h;
}

bool Engine::cancel(const EventHandle& h) {
  if (h.seq >= next_seq_) return false;
  // Everything ordered at or before the current event has been handled.
  if (current_seq_ != std::numeric_limits<std::uint64_t>::max()) {
    if (h.at < now_ || (h.at == now_ && h.seq <= current_seq_)) return false;
  }
  if (!cancelled_.insert(h.seq).second) return false;
  ++cancelled_total_;
  return true;
}

RunOutcome Engine::run_until(SimTime limit) {
  suspects_.clear();
  for (;;) {
    if (queue_.empty()) {
      std::vector<BlockedMcc> blocked;
      for (auto& probe : probes_) probe(blocked);
      if (blocked.empty()) return RunOutcome::Quiescent;
      // Nothing can wake the blocked instances; the watchdog fires.
      SimTime since = blocked.front().since;
      for (const BlockedMcc& b : blocked) {
        suspects_.push_back(b.id);
        since = std::min(since, b.since);
      }
      const SimTime deadline = std::max(now_, since + watchdog_ns_);
      if (deadline > limit) {
        suspects_.clear();
        now_ = std::max(now_, limit);
        return RunOutcome::LimitReached;
      }
      now_ = deadline;
      return RunOutcome::Deadlock;
    }
    if (queue_.top().at > limit) {
      now_ = std::max(now_, limit);
      return RunOutcome::LimitReached;
    }
    SimEvent ev = queue_.top();
    queue_.pop();
    if (auto it = cancelled_.find(ev.seq); it != cancelled_.end()) {
      cancelled_.erase(it);
      continue;
    }
    now_ = ev.at;
    current_seq_ = ev.seq;
    ++processed_;
    record(ev);
    actors_[ev.target]->on_event(ev);
  }
}

void Engine::record(const SimEvent& ev) {
  fnv_value(hash_, ev.at);
  fnv_value(hash_, ev.seq);
  fnv_value(hash_, ev.target);
  const auto kind = static_cast<std::uint8_t>(ev.payload.index());
  fnv_value(hash_, kind);
  std::visit(
      [this](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MessageDelivery>) {
          const auto& m = p.msg;
          fnv_value(hash_, static_cast<std::uint8_t>(m.kind));
          fnv_value(hash_, m.line_addr);
          fnv_value(hash_, m.src);
          fnv_value(hash_, m.dst);
          fnv_value(hash_, m.offset);
          fnv_value(hash_, static_cast<std::uint8_t>(m.control));
          fnv_value(hash_, m.value);
          if (m.carries_line()) fnv(hash_, m.line.bytes.data(), kLineBytes);
        } else if constexpr (std::is_same_v<T, DramCompletion> || std::is_same_v<T, DmaCompletion>) {
          fnv_value(hash_, p.mcc);
          fnv_value(hash_, p.op);
        } else if constexpr (std::is_same_v<T, DispatchQuantum>) {
          fnv_value(hash_, p.processor);
        } else if constexpr (std::is_same_v<T, HostScriptStep>) {
          fnv_value(hash_, p.token);
        } else {
          fnv_value(hash_, p.app);
        }
      },
      ev.payload);
  if (trace_) *trace_ << describe(ev) << '\n';
}

std::string Engine::describe(const SimEvent& ev) const {
  std::ostringstream os;
  os << ev.at << ' ' << ev.seq << ' ' << names_.at(ev.target) << ' ' << to_string(ev.kind());
  std::visit(
      [&os](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MessageDelivery>) {
          os << ' ' << to_string(p.msg.kind) << " addr=0x" << std::hex << p.msg.line_addr << std::dec
             << " src=" << p.msg.src << " dst=" << p.msg.dst;
        } else if constexpr (std::is_same_v<T, DramCompletion> || std::is_same_v<T, DmaCompletion>) {
          os << " mcc=" << p.mcc << " op=" << p.op;
        } else if constexpr (std::is_same_v<T, DispatchQuantum>) {
          os << " proc=" << p.processor;
        } else if constexpr (std::is_same_v<T, HostScriptStep>) {
          os << " token=" << p.token;
        } else {
          os << " app=" << p.app;
        }
      },
      ev.payload);
  return os.str();
}

}  // namespace mccsim
