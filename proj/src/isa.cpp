#include "mccsim/isa.hpp"

#include <algorithm>
#include <array>
#include <cstring>

namespace mccsim {

namespace {

struct OpInfo {
  Opcode op;
  const char* name;
};

constexpr std::array kOps{
    OpInfo{Opcode::NOP, "NOP"},         OpInfo{Opcode::HALT, "HALT"},
    OpInfo{Opcode::YIELD, "YIELD"},     OpInfo{Opcode::MOV, "MOV"},
    OpInfo{Opcode::ADD, "ADD"},         OpInfo{Opcode::SUB, "SUB"},
    OpInfo{Opcode::MUL, "MUL"},         OpInfo{Opcode::DIV, "DIV"},
    OpInfo{Opcode::REM, "REM"},         OpInfo{Opcode::AND, "AND"},
    OpInfo{Opcode::OR, "OR"},           OpInfo{Opcode::XOR, "XOR"},
    OpInfo{Opcode::SHL, "SHL"},         OpInfo{Opcode::SHR, "SHR"},
    OpInfo{Opcode::CMP, "CMP"},         OpInfo{Opcode::BR, "BR"},
    OpInfo{Opcode::BEQ, "BEQ"},         OpInfo{Opcode::BNE, "BNE"},
    OpInfo{Opcode::BLT, "BLT"},         OpInfo{Opcode::BGE, "BGE"},
    OpInfo{Opcode::LDA, "LDA"},         OpInfo{Opcode::LDW, "LDW"},
    OpInfo{Opcode::STA, "STA"},         OpInfo{Opcode::STW, "STW"},
    OpInfo{Opcode::WAITT, "WAITT"},     OpInfo{Opcode::DMA, "DMA"},
    OpInfo{Opcode::DMAZ, "DMAZ"},       OpInfo{Opcode::WAIT, "WAIT"},
    OpInfo{Opcode::SEND_LINE, "SEND_LINE"}, OpInfo{Opcode::RECV_LINE, "RECV_LINE"},
    OpInfo{Opcode::REPLY_LINE, "REPLY_LINE"}, OpInfo{Opcode::STAT_SUB, "STAT_SUB"},
    OpInfo{Opcode::STAT_NEXT, "STAT_NEXT"}, OpInfo{Opcode::PARAM, "PARAM"},
};

constexpr std::array<const char*, 7> kEventNames{"START", "STOP", "HOSTWRITE", "HOSTREAD",
                                                 "DRAM",  "DMA",  "OBSERVE"};

template <typename T>
void put(std::vector<std::uint8_t>& out, std::size_t at, T v) {
  std::memcpy(out.data() + at, &v, sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

}  // namespace

const char* event_name(CpEventKind k) { return kEventNames.at(static_cast<std::size_t>(k)); }

std::optional<CpEventKind> event_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i)
    if (name == kEventNames[i]) return static_cast<CpEventKind>(i);
  return std::nullopt;
}

bool is_valid_opcode(std::uint8_t op) {
  return std::any_of(kOps.begin(), kOps.end(),
                     [op](const OpInfo& i) { return static_cast<std::uint8_t>(i.op) == op; });
}

const char* mnemonic(Opcode op) {
  for (const auto& i : kOps)
    if (i.op == op) return i.name;
  return "???";
}

std::optional<Opcode> opcode_from_mnemonic(std::string_view m) {
  for (const auto& i : kOps)
    if (m == i.name) return i.op;
  return std::nullopt;
}

bool is_branch(Opcode op) { return op >= Opcode::BR && op <= Opcode::BGE; }

std::uint64_t Instruction::encode() const {
  std::uint64_t w = static_cast<std::uint8_t>(op);
  w |= std::uint64_t(rd & 0xF) << 8;
  w |= std::uint64_t(ra & 0xF) << 12;
  w |= std::uint64_t(rb & 0xF) << 16;
  w |= std::uint64_t(flags) << 24;
  w |= std::uint64_t(static_cast<std::uint32_t>(imm)) << 32;
  return w;
}

std::optional<Instruction> Instruction::decode(std::uint64_t word) {
  const auto op = static_cast<std::uint8_t>(word & 0xFF);
  if (!is_valid_opcode(op)) return std::nullopt;
  Instruction in;
  in.op = static_cast<Opcode>(op);
  in.rd = (word >> 8) & 0xF;
  in.ra = (word >> 12) & 0xF;
  in.rb = (word >> 16) & 0xF;
  in.flags = (word >> 24) & 0xFF;
  in.imm = static_cast<std::int32_t>(static_cast<std::uint32_t>(word >> 32));
  return in;
}

const char* to_string(ImageError e) {
  switch (e) {
    case ImageError::TooShort: return "TooShort";
    case ImageError::BadMagic: return "BadMagic";
    case ImageError::BadVersion: return "BadVersion";
    case ImageError::BadCodeLength: return "BadCodeLength";
    case ImageError::LengthMismatch: return "LengthMismatch";
    case ImageError::EntryOutOfRange: return "EntryOutOfRange";
    case ImageError::TooManyParams: return "TooManyParams";
    case ImageError::UnknownEventBits: return "UnknownEventBits";
    case ImageError::ReservedNotZero: return "ReservedNotZero";
  }
  return "?";
}

std::vector<std::uint8_t> ChannelProgramImage::serialize() const {
  std::vector<std::uint8_t> out(kImageHeaderBytes + code.size() * 8, 0);
  std::memcpy(out.data(), kImageMagic.data(), 4);
  put<std::uint16_t>(out, 4, kImageVersion);
  put<std::uint32_t>(out, 6, entry_pc);
  put<std::uint8_t>(out, 10, param_count);
  put<std::uint16_t>(out, 11, declared_events);
  put<std::uint32_t>(out, 13, code_size_bytes());
  put<std::uint8_t>(out, 17, stream_credits);
  for (std::size_t i = 0; i < code.size(); ++i) put<std::uint64_t>(out, kImageHeaderBytes + i * 8, code[i]);
  return out;
}

ChannelProgramImage::ParseResult ChannelProgramImage::parse(std::span<const std::uint8_t> bytes) {
  ParseResult r;
  auto fail = [&r](ImageError e) {
    r.error = e;
    return r;
  };
  if (bytes.size() < kImageHeaderBytes) return fail(ImageError::TooShort);
  if (std::memcmp(bytes.data(), kImageMagic.data(), 4) != 0) return fail(ImageError::BadMagic);
  if (get<std::uint16_t>(bytes, 4) != kImageVersion) return fail(ImageError::BadVersion);
  const auto code_len = get<std::uint32_t>(bytes, 13);
  if (code_len == 0 || code_len % 8 != 0 || code_len > kMaxCodeBytes) return fail(ImageError::BadCodeLength);
  if (bytes.size() != kImageHeaderBytes + code_len) return fail(ImageError::LengthMismatch);
  for (std::size_t i = 18; i < kImageHeaderBytes; ++i)
    if (bytes[i] != 0) return fail(ImageError::ReservedNotZero);

  ChannelProgramImage img;
  img.entry_pc = get<std::uint32_t>(bytes, 6);
  img.param_count = get<std::uint8_t>(bytes, 10);
  img.declared_events = get<std::uint16_t>(bytes, 11);
  img.stream_credits = get<std::uint8_t>(bytes, 17);
  if (img.entry_pc >= code_len / 8) return fail(ImageError::EntryOutOfRange);
  if (img.param_count > kMaxParams) return fail(ImageError::TooManyParams);
  if ((img.declared_events & ~kKnownEventBits) != 0) return fail(ImageError::UnknownEventBits);
  img.code.resize(code_len / 8);
  for (std::size_t i = 0; i < img.code.size(); ++i)
    img.code[i] = get<std::uint64_t>(bytes, kImageHeaderBytes + i * 8);
  r.image = std::move(img);
  return r;
}

}  // namespace mccsim
