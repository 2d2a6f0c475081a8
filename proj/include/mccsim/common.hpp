#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

namespace mccsim {

/// Simulated time in nanoseconds.
using SimTime = std::uint64_t;

inline constexpr SimTime kTimeCap = SimTime{1} << 63;
inline constexpr SimTime kForever = kTimeCap - 1;

using ActorId = std::uint32_t;
using NodeId = std::uint32_t;
using AppId = std::uint32_t;
using MccId = std::uint32_t;

inline constexpr ActorId kNoActor = std::numeric_limits<ActorId>::max();

inline constexpr std::size_t kLineBytes = 64;

/// The 64-byte unit of every coherence-level transfer.
struct CacheLine {
  std::array<std::uint8_t, kLineBytes> bytes{};

  std::uint64_t word(std::size_t i) const {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + i * 8, 8);
    return v;
  }
  void set_word(std::size_t i, std::uint64_t v) { std::memcpy(bytes.data() + i * 8, &v, 8); }

  std::uint32_t u32(std::size_t i) const {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + i * 4, 4);
    return v;
  }
  void set_u32(std::size_t i, std::uint32_t v) { std::memcpy(bytes.data() + i * 4, &v, 4); }

  static CacheLine filled(std::uint8_t b) {
    CacheLine l;
    l.bytes.fill(b);
    return l;
  }

  friend bool operator==(const CacheLine&, const CacheLine&) = default;
};

static_assert(sizeof(CacheLine) == kLineBytes);

constexpr bool is_line_aligned(std::uint64_t v) { return (v % kLineBytes) == 0; }
constexpr std::uint64_t line_floor(std::uint64_t v) { return v & ~std::uint64_t{kLineBytes - 1}; }

enum class Errc {
  SchedulingInPast,
  BadLength,
  BadConfig,
  OutOfFarMemory,
  OutOfHostMemory,
  OutOfRange,
  UnknownNode,
  UnknownMcc,
  AffinityMismatch,
  DuplicateMcc,
  BadImage,
  ReadTimeout,
  Fault,
  ScriptBusy,
};

const char* to_string(Errc e);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace mccsim
