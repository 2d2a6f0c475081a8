#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mccsim/common.hpp"

namespace mccsim {

enum Perm : std::uint8_t { kRead = 1, kWrite = 2, kReadWrite = 3 };
enum class Access : std::uint8_t { Read = kRead, Write = kWrite };

struct HostLocal {
  std::uint64_t offset = 0;  // into host DRAM
  friend bool operator==(const HostLocal&, const HostLocal&) = default;
};
struct FarDirect {
  NodeId node = 0;
  std::uint64_t offset = 0;  // into the node's DRAM
  friend bool operator==(const FarDirect&, const FarDirect&) = default;
};
struct MccControl {
  MccId mcc = 0;
  friend bool operator==(const MccControl&, const MccControl&) = default;
};
struct MccData {
  MccId mcc = 0;
  friend bool operator==(const MccData&, const MccData&) = default;
};

using Backing = std::variant<HostLocal, FarDirect, MccControl, MccData>;

std::string to_string(const Backing& b);

/// Contiguous VA -> backing mapping; the unit of protection.
struct Segment {
  std::uint64_t base_va = 0;
  std::uint64_t length = 0;
  std::uint8_t perms = kReadWrite;
  Backing backing;

  std::uint64_t end_va() const { return base_va + length; }
  bool contains(std::uint64_t va) const { return va >= base_va && va - base_va < length; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class FaultKind : std::uint8_t { Unmapped = 1, Permission = 2, AffinityViolation = 3 };

const char* to_string(FaultKind f);

struct Requester {
  enum class Kind : std::uint8_t { Host, Mcc } kind = Kind::Host;
  MccId mcc = 0;
  NodeId affinity = 0;

  static Requester host() { return {}; }
  static Requester mcc_on(MccId id, NodeId node) { return {Kind::Mcc, id, node}; }
};

/// A resolved access: the backing with `offset` already applied.
struct Translation {
  Backing backing;
  std::uint64_t offset = 0;  // into the segment
  friend bool operator==(const Translation&, const Translation&) = default;
};

struct TranslateResult {
  std::optional<Translation> ok;
  FaultKind fault = FaultKind::Unmapped;

  explicit operator bool() const { return ok.has_value(); }
  friend bool operator==(const TranslateResult& a, const TranslateResult& b) {
    return a.ok == b.ok && (a.ok || a.fault == b.fault);
  }
};

/// Region-class bases of the fixed virtual layout.
inline constexpr std::uint64_t kHostLocalBase = 0x0001'0000;
inline constexpr std::uint64_t kFarDirectBase = 0x1000'0000;
inline constexpr std::uint64_t kMccRegionBase = 0x2000'0000;
inline constexpr std::uint64_t kFarDirectLimit = kMccRegionBase;
inline constexpr std::uint64_t kHostLocalLimit = kFarDirectBase;

/// Translates [va, va+len) against a sorted segment list. Shared by the
/// host master table and node replicas.
TranslateResult translate_in(const std::map<std::uint64_t, Segment>& segments, std::uint64_t va,
                             std::uint64_t len, Access access, const Requester& who,
                             bool strict_affinity);

/// A node-side copy of the segments relevant to one node. Ranges the node
/// may not touch are kept as bare extents so that faults are reported with
/// the same kind the host master table would give.
struct SegmentReplica {
  AppId app = 0;
  NodeId node = 0;
  std::uint64_t epoch = 0;
  bool strict_affinity = true;
  std::map<std::uint64_t, Segment> segments;
  std::map<std::uint64_t, Segment> foreign;

  /// Only valid for requesters hosted on `node`.
  TranslateResult translate(std::uint64_t va, std::uint64_t len, Access access,
                            const Requester& who) const;
};

/// Per-application virtual address space; the master copy lives with the
/// host kernel.
class AddressSpace {
 public:
  explicit AddressSpace(AppId app, bool strict_affinity = true)
      : app_(app), strict_affinity_(strict_affinity) {}

  AppId app() const { return app_; }
  std::uint64_t epoch() const { return epoch_; }
  bool strict_affinity() const { return strict_affinity_; }
  const std::map<std::uint64_t, Segment>& segments() const { return segments_; }

  /// Appends a FarDirect segment at the next free far-class VA. The caller
  /// supplies the node-side offset it allocated.
  const Segment& map_far(NodeId node, std::uint64_t node_offset, std::uint64_t length,
                         std::uint8_t perms = kReadWrite);
  const Segment& map_host(std::uint64_t host_offset, std::uint64_t length,
                          std::uint8_t perms = kReadWrite);
  /// Control and data segments of one MCC, placed back to back.
  std::pair<Segment, Segment> map_mcc(MccId mcc, std::uint64_t control_len, std::uint64_t data_len);

  /// Removes the segment starting at base_va. Returns the removed segment.
  std::optional<Segment> unmap(std::uint64_t base_va);

  TranslateResult translate(std::uint64_t va, Access access, const Requester& who) const {
    return translate_range(va, 1, access, who);
  }
  TranslateResult translate_range(std::uint64_t va, std::uint64_t len, Access access,
                                  const Requester& who) const {
    return translate_in(segments_, va, len, access, who, strict_affinity_);
  }

  /// Copy of the segments `node` may need: its own far memory plus every
  /// host-local segment (DMA targets), or all far memory when affinity is
  /// not enforced.
  SegmentReplica sync_segments(NodeId node) const;

  const Segment* find(std::uint64_t va) const;

 private:
  const Segment& insert(Segment seg);
  void check_invariants() const;

  AppId app_;
  bool strict_affinity_;
  std::uint64_t epoch_ = 0;
  std::map<std::uint64_t, Segment> segments_;
  std::uint64_t next_host_ = kHostLocalBase;
  std::uint64_t next_far_ = kFarDirectBase;
  std::uint64_t next_mcc_ = kMccRegionBase;
};

}  // namespace mccsim
