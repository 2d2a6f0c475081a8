#include "mccsim/interconnect.hpp"

#include <algorithm>

namespace mccsim {

std::uint64_t LinkConfig::serialization_ps(std::uint64_t bytes) const {
  // bytes / (bytes/us) = us; scaled to ps.
  return (bytes * 1'000'000 + bandwidth_bytes_per_us - 1) / bandwidth_bytes_per_us;
}

PortId Interconnect::port_of(ActorId actor) const {
  auto it = ports_.find(actor);
  if (it == ports_.end()) throw Error(Errc::OutOfRange, "actor not attached to the interconnect");
  return it->second;
}

void Interconnect::configure(PortId src, PortId dst, LinkConfig cfg) {
  if (cfg.bandwidth_bytes_per_us == 0) throw Error(Errc::BadConfig, "link bandwidth must be > 0");
  link(src, dst).cfg = cfg;
}

const LinkConfig& Interconnect::config(PortId src, PortId dst) const {
  auto it = links_.find({src, dst});
  return it == links_.end() ? defaults_ : it->second.cfg;
}

Interconnect::Link& Interconnect::link(PortId src, PortId dst) {
  auto [it, inserted] = links_.try_emplace({src, dst});
  if (inserted) it->second.cfg = defaults_;
  return it->second;
}

SimTime Interconnect::send(CoherenceMessage msg, SimTime at) {
  Link& l = link(port_of(msg.src), port_of(msg.dst));
  const std::uint64_t bytes = msg.payload_bytes();
  at = std::max(at, engine_.now());
  const std::uint64_t start_ps = std::max(at * 1000, l.free_at_ps);
  l.free_at_ps = start_ps + l.cfg.serialization_ps(bytes);
  l.bytes += bytes;
  ++messages_;
  // Rounded to the nearest ns; rounding is monotone so FIFO order holds.
  const SimTime delivery = (l.free_at_ps + 500) / 1000 + l.cfg.one_way();
  msg.issued_at = at;
  const ActorId dst = msg.dst;
  engine_.schedule(delivery, dst, MessageDelivery{std::move(msg)});
  return delivery;
}

SimTime Interconnect::reserve(PortId src, PortId dst, std::uint64_t bytes, SimTime at) {
  Link& l = link(src, dst);
  const std::uint64_t start_ps = std::max(at * 1000, l.free_at_ps);
  l.free_at_ps = start_ps + l.cfg.serialization_ps(bytes);
  l.bytes += bytes;
  return (l.free_at_ps + 500) / 1000;
}

std::uint64_t Interconnect::bytes_sent(PortId src, PortId dst) const {
  auto it = links_.find({src, dst});
  return it == links_.end() ? 0 : it->second.bytes;
}

}  // namespace mccsim
