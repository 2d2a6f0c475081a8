#include "mccsim/address_space.hpp"

#include <sstream>

namespace mccsim {

const char* to_string(FaultKind f) {
  switch (f) {
    case FaultKind::Unmapped: return "Unmapped";
    case FaultKind::Permission: return "Permission";
    case FaultKind::AffinityViolation: return "AffinityViolation";
  }
  return "?";
}

std::string to_string(const Backing& b) {
  std::ostringstream os;
  std::visit(
      [&os](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, HostLocal>) os << "HostLocal(" << v.offset << ")";
        if constexpr (std::is_same_v<T, FarDirect>) os << "FarDirect(n" << v.node << "," << v.offset << ")";
        if constexpr (std::is_same_v<T, MccControl>) os << "MccControl(" << v.mcc << ")";
        if constexpr (std::is_same_v<T, MccData>) os << "MccData(" << v.mcc << ")";
      },
      b);
  return os.str();
}

TranslateResult translate_in(const std::map<std::uint64_t, Segment>& segments, std::uint64_t va,
                             std::uint64_t len, Access access, const Requester& who,
                             bool strict_affinity) {
  TranslateResult r;
  if (len == 0 || va + len < va) return r;
  auto it = segments.upper_bound(va);
  if (it == segments.begin()) return r;
  const Segment& seg = std::prev(it)->second;
  if (!seg.contains(va) || va + len > seg.end_va()) return r;

  if ((seg.perms & static_cast<std::uint8_t>(access)) == 0) {
    r.fault = FaultKind::Permission;
    return r;
  }
  if (who.kind == Requester::Kind::Mcc) {
    const bool allowed = std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, HostLocal>) return true;
          if constexpr (std::is_same_v<T, FarDirect>) return !strict_affinity || b.node == who.affinity;
          return false;  // MCC regions are host-only
        },
        seg.backing);
    if (!allowed) {
      r.fault = FaultKind::AffinityViolation;
      return r;
    }
  }
  r.ok = Translation{seg.backing, va - seg.base_va};
  return r;
}

const Segment& AddressSpace::insert(Segment seg) {
  if (seg.length == 0 || !is_line_aligned(seg.length) || !is_line_aligned(seg.base_va))
    throw Error(Errc::BadLength, "segment length must be a positive multiple of 64");
  if (seg.perms == 0 || (seg.perms & ~kReadWrite) != 0)
    throw Error(Errc::BadLength, "segment permissions must be a non-empty subset of RW");
  auto [it, inserted] = segments_.emplace(seg.base_va, seg);
  if (!inserted) throw Error(Errc::OutOfRange, "overlapping segment");
  ++epoch_;
  check_invariants();
  return it->second;
}

void AddressSpace::check_invariants() const {
  std::uint64_t prev_end = 0;
  for (const auto& [base, seg] : segments_) {
    if (base < prev_end) throw std::logic_error("address space segments overlap");
    prev_end = seg.end_va();
  }
}

const Segment& AddressSpace::map_far(NodeId node, std::uint64_t node_offset, std::uint64_t length,
                                     std::uint8_t perms) {
  if (length == 0 || !is_line_aligned(length)) throw Error(Errc::BadLength, "bad far mapping length");
  if (next_far_ + length > kFarDirectLimit || next_far_ + length < next_far_)
    throw Error(Errc::OutOfFarMemory, "far-direct VA class exhausted");
  const auto& seg = insert(Segment{next_far_, length, perms, FarDirect{node, node_offset}});
  next_far_ += length;
  return seg;
}

const Segment& AddressSpace::map_host(std::uint64_t host_offset, std::uint64_t length, std::uint8_t perms) {
  if (length == 0 || !is_line_aligned(length)) throw Error(Errc::BadLength, "bad host mapping length");
  if (next_host_ + length > kHostLocalLimit) throw Error(Errc::OutOfHostMemory, "host VA class exhausted");
  const auto& seg = insert(Segment{next_host_, length, perms, HostLocal{host_offset}});
  next_host_ += length;
  return seg;
}

std::pair<Segment, Segment> AddressSpace::map_mcc(MccId mcc, std::uint64_t control_len,
                                                  std::uint64_t data_len) {
  Segment control = insert(Segment{next_mcc_, control_len, kReadWrite, MccControl{mcc}});
  Segment data = insert(Segment{next_mcc_ + control_len, data_len, kReadWrite, MccData{mcc}});
  next_mcc_ += control_len + data_len;
  return {control, data};
}

std::optional<Segment> AddressSpace::unmap(std::uint64_t base_va) {
  auto it = segments_.find(base_va);
  if (it == segments_.end()) return std::nullopt;
  Segment seg = it->second;
  segments_.erase(it);
  ++epoch_;
  return seg;
}

const Segment* AddressSpace::find(std::uint64_t va) const {
  auto it = segments_.upper_bound(va);
  if (it == segments_.begin()) return nullptr;
  const Segment& seg = std::prev(it)->second;
  return seg.contains(va) ? &seg : nullptr;
}

SegmentReplica AddressSpace::sync_segments(NodeId node) const {
  SegmentReplica rep{app_, node, epoch_, strict_affinity_, {}, {}};
  for (const auto& [base, seg] : segments_) {
    const bool relevant = std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, HostLocal>) return true;
          if constexpr (std::is_same_v<T, FarDirect>) return !strict_affinity_ || b.node == node;
          return false;
        },
        seg.backing);
    if (relevant) {
      rep.segments.emplace(base, seg);
    } else {
      Segment extent = seg;
      extent.backing = FarDirect{};
      rep.foreign.emplace(base, extent);
    }
  }
  return rep;
}

TranslateResult SegmentReplica::translate(std::uint64_t va, std::uint64_t len, Access access,
                                          const Requester& who) const {
  TranslateResult r = translate_in(segments, va, len, access, who, strict_affinity);
  if (r || r.fault != FaultKind::Unmapped) return r;
  auto it = foreign.upper_bound(va);
  if (it == foreign.begin() || len == 0) return r;
  const Segment& seg = std::prev(it)->second;
  if (!seg.contains(va) || va + len > seg.end_va()) return r;
  r.fault = (seg.perms & static_cast<std::uint8_t>(access)) == 0 ? FaultKind::Permission
                                                                 : FaultKind::AffinityViolation;
  return r;
}

}  // namespace mccsim
