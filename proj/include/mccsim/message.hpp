#pragma once

#include "mccsim/common.hpp"

namespace mccsim {

enum class MsgKind : std::uint8_t { LoadReq, StoreReq, DataResp, Ack, ObserveNotify };

const char* to_string(MsgKind k);

/// What a host-originated request addresses on the far side. The host MMU
/// resolves this before the request leaves the CPU.
enum class TargetKind : std::uint8_t { None, FarDram, Control, Data };

/// Side-band meaning of control-class messages.
enum class ControlOp : std::uint8_t { None, Credit, SegmentSync };

struct CoherenceMessage {
  MsgKind kind = MsgKind::Ack;
  std::uint64_t line_addr = 0;  // virtual, 64-aligned
  ActorId src = kNoActor;
  ActorId dst = kNoActor;
  SimTime issued_at = 0;

  AppId app = 0;
  TargetKind target = TargetKind::None;
  MccId mcc = 0;
  std::uint64_t offset = 0;  // node DRAM offset or offset inside an MCC area
  ControlOp control = ControlOp::None;
  bool streamed = false;     // DataResp pushed by SEND_LINE (consumes a credit)
  std::uint64_t value = 0;   // MMIO word, credit count
  CacheLine line{};

  bool carries_line() const { return kind == MsgKind::StoreReq || kind == MsgKind::DataResp; }
  std::uint64_t payload_bytes() const { return carries_line() ? kLineBytes : 8; }
};

}  // namespace mccsim
