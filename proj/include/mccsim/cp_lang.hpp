#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mccsim/isa.hpp"

namespace mccsim {

enum class DiagCode : std::uint8_t {
  Syntax,
  UnknownMnemonic,
  BadOperand,
  UndefinedLabel,
  DuplicateLabel,
  BranchOutOfRange,
  TooManyParams,
  EventNotDeclared,
  BadDirective,
  CodeTooLarge,
};

const char* to_string(DiagCode c);

struct Diagnostic {
  std::size_t line = 0;  // 1-based; 0 for whole-program problems
  DiagCode code = DiagCode::Syntax;
  std::string message;

  std::string format() const;
};

struct AssemblyResult {
  std::optional<ChannelProgramImage> image;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return image.has_value(); }
  std::string report() const;
};

/// Assembles channel-program source text.
///
/// Syntax, one statement per line, `;` or `#` starts a comment:
///   label:                      defines a label (may prefix an instruction)
///   .params N                   number of invocation parameters (<= 8)
///   .events A|B|...             declared events, or NONE
///   .credits N                  stream credits (0 = default)
///   .entry label                entry point (default: first instruction)
///   .word 0x...                 raw instruction word
/// Registers are r0..r15. Operand `B` is a register or an immediate.
AssemblyResult assemble(std::string_view source);

/// Assembles or throws Error(BadImage) carrying the formatted diagnostics.
std::shared_ptr<const ChannelProgramImage> assemble_or_throw(std::string_view source);

/// Renders an image as source that assembles back to the same image.
std::string disassemble(const ChannelProgramImage& image);

enum class Severity : std::uint8_t { Error, Warning };
enum class FindingKind : std::uint8_t {
  WaitNeverSatisfied,      // filter empty or disjoint from the declared events
  CompletionBeforeIssue,   // waits for DRAM/DMA on a path that issued nothing
  StreamLoopWithoutYield,  // SEND_LINE cycle that never blocks on an event
};

const char* to_string(FindingKind k);

struct Finding {
  FindingKind kind;
  Severity severity;
  std::uint32_t pc;
  std::string message;
};

struct SafetyReport {
  std::vector<Finding> findings;

  bool ok() const;  // no errors; warnings allowed
  bool clean() const { return findings.empty(); }
  bool has(FindingKind k) const;
  std::string format() const;
};

SafetyReport check_safety(const ChannelProgramImage& image);

}  // namespace mccsim
