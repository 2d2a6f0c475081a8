#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mccsim/common.hpp"

namespace mccsim {

/// Event kinds a channel program can wait for; values are bit positions in
/// the image's declared-events bitmap and in WAIT filters.
enum class CpEventKind : std::uint8_t {
  Start = 0,
  Stop = 1,
  HostLineWrite = 2,
  HostLineRead = 3,
  DramCompletion = 4,
  DmaCompletion = 5,
  Observe = 6,
};

inline constexpr std::uint16_t event_bit(CpEventKind k) {
  return static_cast<std::uint16_t>(1u << static_cast<unsigned>(k));
}
inline constexpr std::uint16_t kKnownEventBits = 0x7F;
/// Internal wake reason for SEND_LINE blocked on stream credits. Never
/// declared or waited on by programs.
inline constexpr std::uint16_t kCreditWakeBit = 0x80;

const char* event_name(CpEventKind k);
std::optional<CpEventKind> event_from_name(std::string_view name);

enum class Opcode : std::uint8_t {
  NOP = 0x00,
  HALT = 0x01,
  YIELD = 0x02,
  MOV = 0x03,

  ADD = 0x10,
  SUB = 0x11,
  MUL = 0x12,
  DIV = 0x13,
  REM = 0x14,
  AND = 0x15,
  OR = 0x16,
  XOR = 0x17,
  SHL = 0x18,
  SHR = 0x19,
  CMP = 0x1A,

  BR = 0x20,
  BEQ = 0x21,
  BNE = 0x22,
  BLT = 0x23,
  BGE = 0x24,

  LDA = 0x30,
  LDW = 0x31,
  STA = 0x32,
  STW = 0x33,
  WAITT = 0x34,
  DMA = 0x35,
  DMAZ = 0x36,

  WAIT = 0x40,
  SEND_LINE = 0x41,
  RECV_LINE = 0x42,
  REPLY_LINE = 0x43,
  STAT_SUB = 0x44,
  STAT_NEXT = 0x45,
  PARAM = 0x46,
};

bool is_valid_opcode(std::uint8_t op);
const char* mnemonic(Opcode op);
std::optional<Opcode> opcode_from_mnemonic(std::string_view m);
bool is_branch(Opcode op);

/// Flag bits (byte 3 of the instruction word).
inline constexpr std::uint8_t kFlagImm = 0x01;      // operand B is imm32, not rB
inline constexpr std::uint8_t kFlagWaitRegs = 0x02; // WAIT writes kind/arg to rD/rA

/// One 8-byte instruction word, little-endian:
///   byte 0 opcode | byte 1 rD (lo) rA (hi) | byte 2 rB (lo) pad (hi)
///   byte 3 flags  | bytes 4..7 imm32
struct Instruction {
  Opcode op = Opcode::NOP;
  std::uint8_t rd = 0;
  std::uint8_t ra = 0;
  std::uint8_t rb = 0;
  std::uint8_t flags = 0;
  std::int32_t imm = 0;

  std::uint64_t encode() const;
  /// nullopt for an unknown opcode.
  static std::optional<Instruction> decode(std::uint64_t word);

  bool uses_imm() const { return (flags & kFlagImm) != 0; }
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

inline constexpr std::array<char, 4> kImageMagic{'M', 'C', 'C', 'P'};
inline constexpr std::uint16_t kImageVersion = 1;
inline constexpr std::size_t kImageHeaderBytes = 24;
inline constexpr std::size_t kMaxCodeBytes = 65536;
inline constexpr std::uint8_t kMaxParams = 8;
inline constexpr std::uint8_t kDefaultStreamCredits = 8;

inline constexpr std::uint64_t kControlAreaBytes = 4096;
inline constexpr std::uint64_t kDataAreaBytes = 65536;

/// MCC-private scratchpad, addressable by the program only. Lines 0..63 form
/// the RECV_LINE landing ring.
inline constexpr std::uint64_t kScratchBase = 0x7F00'0000;
inline constexpr std::uint64_t kScratchBytes = 65536;
inline constexpr std::uint64_t kRecvRingLines = 64;

enum class ImageError {
  TooShort,
  BadMagic,
  BadVersion,
  BadCodeLength,
  LengthMismatch,
  EntryOutOfRange,
  TooManyParams,
  UnknownEventBits,
  ReservedNotZero,
};

const char* to_string(ImageError e);

/// Verified bytecode plus metadata. Header layout (little-endian):
///   0 magic "MCCP" | 4 version u16 | 6 entry_pc u32 | 10 param_count u8
///   11 declared_events u16 | 13 code_len u32 | 17 stream_credits u8
///   18..23 reserved (zero)
/// followed by code_len bytes of instruction words.
struct ChannelProgramImage {
  std::vector<std::uint64_t> code;
  std::uint32_t entry_pc = 0;
  std::uint8_t param_count = 0;
  std::uint16_t declared_events = 0;
  std::uint8_t stream_credits = 0;  // 0 selects the default

  std::uint32_t code_size_bytes() const { return static_cast<std::uint32_t>(code.size() * 8); }
  std::uint8_t effective_credits() const {
    return stream_credits == 0 ? kDefaultStreamCredits : stream_credits;
  }

  std::vector<std::uint8_t> serialize() const;

  struct ParseResult;
  /// Validates the header and sizes; instruction words are not inspected.
  static ParseResult parse(std::span<const std::uint8_t> bytes);

  friend bool operator==(const ChannelProgramImage&, const ChannelProgramImage&) = default;
};

struct ChannelProgramImage::ParseResult {
  std::optional<ChannelProgramImage> image;
  ImageError error = ImageError::TooShort;
};

}  // namespace mccsim
