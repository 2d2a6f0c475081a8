#pragma once

#include <map>
#include <unordered_map>
#include <utility>

#include "mccsim/message.hpp"
#include "mccsim/sim_core.hpp"

namespace mccsim {

struct LinkConfig {
  SimTime base_latency_ns = 250;
  SimTime per_hop_latency_ns = 300;
  std::uint32_t hops = 0;
  std::uint64_t bandwidth_bytes_per_us = 52'000;

  SimTime one_way() const { return base_latency_ns + SimTime{hops} * per_hop_latency_ns; }
  /// Link occupancy of `bytes`, in picoseconds (rounded up).
  std::uint64_t serialization_ps(std::uint64_t bytes) const;

  static LinkConfig from(const SimConfig& c) {
    return {c.far_base_latency_ns, c.per_hop_latency_ns, c.hops, c.far_bandwidth_bytes_per_us};
  }
};

/// Unloaded request/response latency: two traversals plus the service time
/// at the far end. Serialization is not included.
constexpr SimTime round_trip(const LinkConfig& link, SimTime service_ns) {
  return 2 * (link.base_latency_ns + SimTime{link.hops} * link.per_hop_latency_ns) + service_ns;
}

/// Ports are the physical endpoints of links: the host CPU socket and one per
/// far-memory node. Several actors may share a port.
using PortId = std::uint32_t;
inline constexpr PortId kHostPort = 0xFFFF'FFFF;

/// Reliable, FIFO, bandwidth-serialized message transport between ports.
class Interconnect {
 public:
  Interconnect(Engine& engine, LinkConfig defaults) : engine_(engine), defaults_(defaults) {}

  void attach(ActorId actor, PortId port) { ports_[actor] = port; }
  PortId port_of(ActorId actor) const;

  /// Overrides the configuration of the directed link src -> dst.
  void configure(PortId src, PortId dst, LinkConfig cfg);
  const LinkConfig& config(PortId src, PortId dst) const;
  const LinkConfig& defaults() const { return defaults_; }

  /// Enqueues `msg` on its link and schedules delivery to msg.dst. Returns the
  /// delivery time.
  SimTime send(CoherenceMessage msg) { return send(std::move(msg), engine_.now()); }
  /// Same, with the message entering the link at `at` (not before now).
  SimTime send(CoherenceMessage msg, SimTime at);

  /// Occupies the link src -> dst for `bytes` starting no earlier than `at`
  /// without delivering anything (bulk DMA). Returns when the transfer
  /// leaves the link.
  SimTime reserve(PortId src, PortId dst, std::uint64_t bytes, SimTime at);

  std::uint64_t bytes_sent(PortId src, PortId dst) const;
  std::uint64_t messages_sent() const { return messages_; }

 private:
  struct Link {
    LinkConfig cfg;
    std::uint64_t free_at_ps = 0;
    std::uint64_t bytes = 0;
  };

  Link& link(PortId src, PortId dst);

  Engine& engine_;
  LinkConfig defaults_;
  std::unordered_map<ActorId, PortId> ports_;
  std::map<std::pair<PortId, PortId>, Link> links_;
  std::uint64_t messages_ = 0;
};

}  // namespace mccsim
