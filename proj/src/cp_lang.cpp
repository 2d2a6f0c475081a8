#include "mccsim/cp_lang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace mccsim {

const char* to_string(DiagCode c) {
  switch (c) {
    case DiagCode::Syntax: return "Syntax";
    case DiagCode::UnknownMnemonic: return "UnknownMnemonic";
    case DiagCode::BadOperand: return "BadOperand";
    case DiagCode::UndefinedLabel: return "UndefinedLabel";
    case DiagCode::DuplicateLabel: return "DuplicateLabel";
    case DiagCode::BranchOutOfRange: return "BranchOutOfRange";
    case DiagCode::TooManyParams: return "TooManyParams";
    case DiagCode::EventNotDeclared: return "EventNotDeclared";
    case DiagCode::BadDirective: return "BadDirective";
    case DiagCode::CodeTooLarge: return "CodeTooLarge";
  }
  return "?";
}

std::string Diagnostic::format() const {
  if (line == 0) return fmt::format("error[{}]: {}", to_string(code), message);
  return fmt::format("line {}: error[{}]: {}", line, to_string(code), message);
}

std::string AssemblyResult::report() const {
  std::string out;
  for (const auto& d : diagnostics) out += d.format() + "\n";
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; });
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  if (v > (std::uint64_t{1} << 40)) return std::nullopt;
  const auto sv = static_cast<std::int64_t>(v);
  return neg ? -sv : sv;
}

std::optional<std::int32_t> parse_imm32(std::string_view s) {
  auto v = parse_int(s);
  if (!v || *v < -(std::int64_t{1} << 31) || *v >= (std::int64_t{1} << 32)) return std::nullopt;
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(*v));
}

std::optional<std::uint8_t> parse_reg(std::string_view s) {
  s = trim(s);
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R')) return std::nullopt;
  unsigned v = 0;
  auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v > 15) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

std::optional<std::uint8_t> parse_mem(std::string_view s) {
  s = trim(s);
  if (s.size() < 4 || s.front() != '[' || s.back() != ']') return std::nullopt;
  return parse_reg(s.substr(1, s.size() - 2));
}

/// Parses an event list such as `HOSTWRITE|DRAM`; NONE is the empty set.
std::optional<std::uint16_t> parse_events(std::string_view s, std::string_view seps) {
  s = trim(s);
  if (upper(s) == "NONE") return 0;
  std::uint16_t bits = 0;
  while (!s.empty()) {
    const auto cut = s.find_first_of(seps);
    const auto name = trim(s.substr(0, cut));
    auto k = event_from_name(upper(name));
    if (!k) return std::nullopt;
    bits |= event_bit(*k);
    if (cut == std::string_view::npos) break;
    s.remove_prefix(cut + 1);
  }
  return bits;
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

struct Stmt {
  std::size_t line = 0;
  std::string mnemonic;
  std::vector<std::string_view> ops;
  std::optional<std::uint64_t> raw;
};

enum class Shape {
  None,      // NOP HALT YIELD STAT_SUB
  MovB,      // MOV rD, B
  AluB,      // ADD rD, rA, B
  Br,        // BR target
  BrCond,    // BEQ rA, rB, target
  Load,      // LDA tag, rD, [rA]
  Store,     // STA tag, [rA], rS
  Tag,       // WAITT tag
  Dma,       // DMA tag, rD, rA, rB
  DmaZero,   // DMAZ tag, rD, rB
  Wait,      // WAIT [rD, rA,] EVENTS
  LineOut,   // SEND_LINE B, rA
  LineIn,    // RECV_LINE B, rD
  RegOnly,   // STAT_NEXT rD
  Param,     // PARAM i, rD
};

Shape shape_of(Opcode op) {
  switch (op) {
    case Opcode::NOP:
    case Opcode::HALT:
    case Opcode::YIELD:
    case Opcode::STAT_SUB: return Shape::None;
    case Opcode::MOV: return Shape::MovB;
    case Opcode::ADD:
    case Opcode::SUB:
    case Opcode::MUL:
    case Opcode::DIV:
    case Opcode::REM:
    case Opcode::AND:
    case Opcode::OR:
    case Opcode::XOR:
    case Opcode::SHL:
    case Opcode::SHR:
    case Opcode::CMP: return Shape::AluB;
    case Opcode::BR: return Shape::Br;
    case Opcode::BEQ:
    case Opcode::BNE:
    case Opcode::BLT:
    case Opcode::BGE: return Shape::BrCond;
    case Opcode::LDA:
    case Opcode::LDW: return Shape::Load;
    case Opcode::STA:
    case Opcode::STW: return Shape::Store;
    case Opcode::WAITT: return Shape::Tag;
    case Opcode::DMA: return Shape::Dma;
    case Opcode::DMAZ: return Shape::DmaZero;
    case Opcode::WAIT: return Shape::Wait;
    case Opcode::SEND_LINE:
    case Opcode::REPLY_LINE: return Shape::LineOut;
    case Opcode::RECV_LINE: return Shape::LineIn;
    case Opcode::STAT_NEXT: return Shape::RegOnly;
    case Opcode::PARAM: return Shape::Param;
  }
  return Shape::None;
}

std::size_t arity(Shape s) {
  switch (s) {
    case Shape::None: return 0;
    case Shape::Br:
    case Shape::Tag:
    case Shape::RegOnly: return 1;
    case Shape::MovB:
    case Shape::LineOut:
    case Shape::LineIn:
    case Shape::Param: return 2;
    case Shape::AluB:
    case Shape::BrCond:
    case Shape::Load:
    case Shape::Store:
    case Shape::DmaZero: return 3;
    case Shape::Dma: return 4;
    case Shape::Wait: return 1;  // or 3, checked separately
  }
  return 0;
}

class Assembler {
 public:
  explicit Assembler(std::string_view src) : src_(src) {}

  AssemblyResult run() {
    scan();
    if (code_limit_exceeded_) error(0, DiagCode::CodeTooLarge, "program exceeds 8192 instructions");
    if (stmts_.empty() && diags_.empty()) error(0, DiagCode::Syntax, "program has no instructions");
    if (params_ > kMaxParams) error(params_line_, DiagCode::TooManyParams, fmt::format(".params {} exceeds {}", params_, kMaxParams));

    ChannelProgramImage img;
    img.param_count = static_cast<std::uint8_t>(std::min<std::uint64_t>(params_, kMaxParams));
    img.declared_events = events_;
    img.stream_credits = credits_;
    for (const Stmt& s : stmts_) img.code.push_back(encode(s).value_or(0));

    if (entry_label_) {
      auto it = labels_.find(*entry_label_);
      if (it == labels_.end()) {
        error(entry_line_, DiagCode::UndefinedLabel, "undefined entry label '" + *entry_label_ + "'");
      } else if (it->second >= stmts_.size()) {
        error(entry_line_, DiagCode::BranchOutOfRange, "entry label does not name an instruction");
      } else {
        img.entry_pc = static_cast<std::uint32_t>(it->second);
      }
    }

    AssemblyResult r;
    std::stable_sort(diags_.begin(), diags_.end(), [](const auto& a, const auto& b) { return a.line < b.line; });
    r.diagnostics = std::move(diags_);
    if (r.diagnostics.empty()) r.image = std::move(img);
    return r;
  }

 private:
  void error(std::size_t line, DiagCode code, std::string msg) { diags_.push_back({line, code, std::move(msg)}); }

  void scan() {
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= src_.size()) {
      const auto nl = src_.find('\n', pos);
      std::string_view line = src_.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      ++lineno;
      statement(lineno, line);
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
  }

  void statement(std::size_t lineno, std::string_view line) {
    const auto cmt = line.find_first_of(";#");
    if (cmt != std::string_view::npos) line = line.substr(0, cmt);
    line = trim(line);
    while (true) {
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) break;
      const auto name = trim(line.substr(0, colon));
      if (!is_ident(name) || parse_reg(name)) {
        error(lineno, DiagCode::Syntax, "bad label '" + std::string(name) + "'");
        return;
      }
      if (!labels_.emplace(std::string(name), stmts_.size()).second)
        error(lineno, DiagCode::DuplicateLabel, "label '" + std::string(name) + "' defined twice");
      line = trim(line.substr(colon + 1));
    }
    if (line.empty()) return;

    const auto sp = line.find_first_of(" \t");
    const std::string head = upper(line.substr(0, sp));
    const std::string_view rest = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));

    if (head.front() == '.') {
      directive(lineno, head, rest);
      return;
    }
    if (stmts_.size() >= kMaxCodeBytes / 8) {
      code_limit_exceeded_ = true;
      return;
    }
    stmts_.push_back(Stmt{lineno, head, split_operands(rest), std::nullopt});
  }

  void directive(std::size_t lineno, const std::string& head, std::string_view rest) {
    if (head == ".PARAMS") {
      auto v = parse_int(rest);
      if (!v || *v < 0) return error(lineno, DiagCode::BadDirective, ".params needs a non-negative count");
      params_ = static_cast<std::uint64_t>(*v);
      params_line_ = lineno;
    } else if (head == ".EVENTS") {
      auto ev = parse_events(rest, "|,");
      if (!ev) return error(lineno, DiagCode::BadDirective, "unknown event in '" + std::string(rest) + "'");
      events_ |= *ev;
    } else if (head == ".CREDITS") {
      auto v = parse_int(rest);
      if (!v || *v < 0 || *v > 255) return error(lineno, DiagCode::BadDirective, ".credits needs a value in 0..255");
      credits_ = static_cast<std::uint8_t>(*v);
    } else if (head == ".ENTRY") {
      if (!is_ident(rest)) return error(lineno, DiagCode::BadDirective, ".entry needs a label");
      entry_label_ = std::string(rest);
      entry_line_ = lineno;
    } else if (head == ".WORD") {
      auto v = parse_int(rest);
      std::uint64_t w = 0;
      const auto t = trim(rest);
      if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
        auto [p, ec] = std::from_chars(t.data() + 2, t.data() + t.size(), w, 16);
        if (ec != std::errc{} || p != t.data() + t.size()) v.reset();
        else v = 0;
      } else if (v && *v >= 0) {
        w = static_cast<std::uint64_t>(*v);
      } else {
        v.reset();
      }
      if (!v) return error(lineno, DiagCode::BadDirective, ".word needs a 64-bit value");
      if (stmts_.size() >= kMaxCodeBytes / 8) {
        code_limit_exceeded_ = true;
        return;
      }
      stmts_.push_back(Stmt{lineno, ".WORD", {}, w});
    } else {
      error(lineno, DiagCode::BadDirective, "unknown directive " + head);
    }
  }

  std::optional<std::uint8_t> reg(const Stmt& s, std::string_view op) {
    auto r = parse_reg(op);
    if (!r) error(s.line, DiagCode::BadOperand, "expected a register, got '" + std::string(op) + "'");
    return r;
  }

  std::optional<std::int32_t> imm(const Stmt& s, std::string_view op, const char* what) {
    auto v = parse_imm32(op);
    if (!v) error(s.line, DiagCode::BadOperand, fmt::format("expected {}, got '{}'", what, op));
    return v;
  }

  /// Register or immediate into rb/imm.
  bool operand_b(const Stmt& s, std::string_view op, Instruction& in) {
    if (auto r = parse_reg(op)) {
      in.rb = *r;
      return true;
    }
    auto v = parse_imm32(op);
    if (!v) {
      error(s.line, DiagCode::BadOperand, "expected a register or immediate, got '" + std::string(op) + "'");
      return false;
    }
    in.imm = *v;
    in.flags |= kFlagImm;
    return true;
  }

  std::optional<std::int32_t> target(const Stmt& s, std::string_view op) {
    std::optional<std::uint64_t> pc;
    if (auto v = parse_int(op)) {
      if (*v >= 0) pc = static_cast<std::uint64_t>(*v);
      else {
        error(s.line, DiagCode::BranchOutOfRange, "negative branch target");
        return std::nullopt;
      }
    } else if (is_ident(op)) {
      auto it = labels_.find(std::string(op));
      if (it == labels_.end()) {
        error(s.line, DiagCode::UndefinedLabel, "undefined label '" + std::string(op) + "'");
        return std::nullopt;
      }
      pc = it->second;
    } else {
      error(s.line, DiagCode::BadOperand, "expected a branch target, got '" + std::string(op) + "'");
      return std::nullopt;
    }
    if (*pc >= stmts_.size()) {
      error(s.line, DiagCode::BranchOutOfRange, fmt::format("branch target {} outside code of {} instructions", *pc, stmts_.size()));
      return std::nullopt;
    }
    return static_cast<std::int32_t>(*pc);
  }

  std::optional<std::uint64_t> encode(const Stmt& s) {
    if (s.raw) return s.raw;
    auto op = opcode_from_mnemonic(s.mnemonic);
    if (!op) {
      error(s.line, DiagCode::UnknownMnemonic, "unknown mnemonic '" + s.mnemonic + "'");
      return std::nullopt;
    }
    const Shape shape = shape_of(*op);
    const auto& o = s.ops;
    const bool arity_ok = shape == Shape::Wait ? (o.size() == 1 || o.size() == 3) : o.size() == arity(shape);
    if (!arity_ok) {
      error(s.line, DiagCode::BadOperand, fmt::format("{} takes {} operand(s), got {}", s.mnemonic,
                                                       shape == Shape::Wait ? "1 or 3" : std::to_string(arity(shape)),
                                                       o.size()));
      return std::nullopt;
    }

    Instruction in;
    in.op = *op;
    bool ok = true;
    auto set = [&](std::uint8_t& field, std::optional<std::uint8_t> r) {
      if (r) field = *r;
      else ok = false;
    };
    auto set_imm = [&](std::optional<std::int32_t> v) {
      if (v) in.imm = *v;
      else ok = false;
    };

    switch (shape) {
      case Shape::None: break;
      case Shape::MovB:
        set(in.rd, reg(s, o[0]));
        ok = operand_b(s, o[1], in) && ok;
        break;
      case Shape::AluB:
        set(in.rd, reg(s, o[0]));
        set(in.ra, reg(s, o[1]));
        ok = operand_b(s, o[2], in) && ok;
        break;
      case Shape::Br: set_imm(target(s, o[0])); break;
      case Shape::BrCond:
        set(in.ra, reg(s, o[0]));
        set(in.rb, reg(s, o[1]));
        set_imm(target(s, o[2]));
        break;
      case Shape::Load: {
        set_imm(imm(s, o[0], "a tag"));
        set(in.rd, reg(s, o[1]));
        auto m = parse_mem(o[2]);
        if (!m) error(s.line, DiagCode::BadOperand, "expected [rA], got '" + std::string(o[2]) + "'");
        set(in.ra, m);
        break;
      }
      case Shape::Store: {
        set_imm(imm(s, o[0], "a tag"));
        auto m = parse_mem(o[1]);
        if (!m) error(s.line, DiagCode::BadOperand, "expected [rA], got '" + std::string(o[1]) + "'");
        set(in.ra, m);
        set(in.rd, reg(s, o[2]));
        break;
      }
      case Shape::Tag: set_imm(imm(s, o[0], "a tag")); break;
      case Shape::Dma:
        set_imm(imm(s, o[0], "a tag"));
        set(in.rd, reg(s, o[1]));
        set(in.ra, reg(s, o[2]));
        set(in.rb, reg(s, o[3]));
        break;
      case Shape::DmaZero:
        set_imm(imm(s, o[0], "a tag"));
        set(in.rd, reg(s, o[1]));
        set(in.rb, reg(s, o[2]));
        break;
      case Shape::Wait: {
        if (o.size() == 3) {
          set(in.rd, reg(s, o[0]));
          set(in.ra, reg(s, o[1]));
          in.flags |= kFlagWaitRegs;
        }
        auto ev = parse_events(o.back(), "|");
        if (!ev) {
          error(s.line, DiagCode::BadOperand, "bad event list '" + std::string(o.back()) + "'");
          ok = false;
          break;
        }
        if ((*ev & ~events_) != 0) {
          error(s.line, DiagCode::EventNotDeclared,
                "WAIT on '" + std::string(o.back()) + "' which is not declared in .events");
          ok = false;
        }
        in.imm = *ev;
        break;
      }
      case Shape::LineOut:
        ok = operand_b(s, o[0], in) && ok;
        set(in.ra, reg(s, o[1]));
        break;
      case Shape::LineIn:
        ok = operand_b(s, o[0], in) && ok;
        set(in.rd, reg(s, o[1]));
        break;
      case Shape::RegOnly: set(in.rd, reg(s, o[0])); break;
      case Shape::Param: {
        auto v = parse_int(o[0]);
        if (!v || *v < 0) {
          error(s.line, DiagCode::BadOperand, "expected a parameter index");
          ok = false;
        } else if (static_cast<std::uint64_t>(*v) >= std::min<std::uint64_t>(params_, kMaxParams)) {
          error(s.line, DiagCode::TooManyParams,
                fmt::format("PARAM {} but .params declares {}", *v, params_));
          ok = false;
        } else {
          in.imm = static_cast<std::int32_t>(*v);
        }
        set(in.rd, reg(s, o[1]));
        break;
      }
    }
    if (!ok) return std::nullopt;
    return in.encode();
  }

  std::string_view src_;
  std::vector<Stmt> stmts_;
  std::map<std::string, std::size_t> labels_;
  std::vector<Diagnostic> diags_;
  std::uint64_t params_ = 0;
  std::size_t params_line_ = 0;
  std::uint16_t events_ = 0;
  std::uint8_t credits_ = 0;
  std::optional<std::string> entry_label_;
  std::size_t entry_line_ = 0;
  bool code_limit_exceeded_ = false;
};

std::string events_text(std::uint16_t bits) {
  if (bits == 0) return "NONE";
  std::string out;
  for (unsigned k = 0; k < 7; ++k) {
    if (bits & (1u << k)) {
      if (!out.empty()) out += '|';
      out += event_name(static_cast<CpEventKind>(k));
    }
  }
  return out;
}

/// Copy of `in` with every field the opcode ignores cleared. An instruction
/// is printable as text only if it equals its canonical form.
Instruction canonical(const Instruction& in) {
  Instruction c;
  c.op = in.op;
  auto take_b = [&] {
    c.flags = in.flags & kFlagImm;
    if (c.flags) c.imm = in.imm;
    else c.rb = in.rb;
  };
  switch (shape_of(in.op)) {
    case Shape::None: break;
    case Shape::MovB:
      c.rd = in.rd;
      take_b();
      break;
    case Shape::AluB:
      c.rd = in.rd;
      c.ra = in.ra;
      take_b();
      break;
    case Shape::Br: c.imm = in.imm; break;
    case Shape::BrCond:
      c.ra = in.ra;
      c.rb = in.rb;
      c.imm = in.imm;
      break;
    case Shape::Load:
    case Shape::Store:
      c.imm = in.imm;
      c.rd = in.rd;
      c.ra = in.ra;
      break;
    case Shape::Tag: c.imm = in.imm; break;
    case Shape::Dma:
      c.imm = in.imm;
      c.rd = in.rd;
      c.ra = in.ra;
      c.rb = in.rb;
      break;
    case Shape::DmaZero:
      c.imm = in.imm;
      c.rd = in.rd;
      c.rb = in.rb;
      break;
    case Shape::Wait:
      c.imm = in.imm & kKnownEventBits;
      c.flags = in.flags & kFlagWaitRegs;
      if (c.flags) {
        c.rd = in.rd;
        c.ra = in.ra;
      }
      break;
    case Shape::LineOut:
      c.ra = in.ra;
      take_b();
      break;
    case Shape::LineIn:
      c.rd = in.rd;
      take_b();
      break;
    case Shape::RegOnly: c.rd = in.rd; break;
    case Shape::Param:
      c.imm = in.imm;
      c.rd = in.rd;
      break;
  }
  return c;
}

std::string b_text(const Instruction& in) {
  return in.uses_imm() ? std::to_string(in.imm) : fmt::format("r{}", in.rb);
}

std::string tag_text(const Instruction& in) { return std::to_string(static_cast<std::uint32_t>(in.imm)); }

}  // namespace

AssemblyResult assemble(std::string_view source) { return Assembler(source).run(); }

std::shared_ptr<const ChannelProgramImage> assemble_or_throw(std::string_view source) {
  AssemblyResult r = assemble(source);
  if (!r.ok()) throw Error(Errc::BadImage, "channel program does not assemble:\n" + r.report());
  return std::make_shared<const ChannelProgramImage>(std::move(*r.image));
}

std::string disassemble(const ChannelProgramImage& image) {
  const std::size_t n = image.code.size();
  std::vector<std::optional<Instruction>> text(n);
  std::set<std::uint32_t> targets;
  if (image.entry_pc != 0) targets.insert(image.entry_pc);
  for (std::size_t pc = 0; pc < n; ++pc) {
    auto in = Instruction::decode(image.code[pc]);
    if (!in || canonical(*in).encode() != image.code[pc]) continue;
    if (is_branch(in->op)) {
      const auto t = static_cast<std::uint32_t>(in->imm);
      if (t >= n) continue;
      targets.insert(t);
    }
    if (in->op == Opcode::PARAM && static_cast<std::uint32_t>(in->imm) >= image.param_count) continue;
    if (in->op == Opcode::WAIT && (in->imm & ~image.declared_events) != 0) continue;
    text[pc] = in;
  }

  std::ostringstream out;
  if (image.param_count) out << ".params " << unsigned{image.param_count} << "\n";
  out << ".events " << events_text(image.declared_events) << "\n";
  if (image.stream_credits) out << ".credits " << unsigned{image.stream_credits} << "\n";
  if (image.entry_pc != 0) out << ".entry L" << image.entry_pc << "\n";

  for (std::size_t pc = 0; pc < n; ++pc) {
    if (targets.count(static_cast<std::uint32_t>(pc))) out << "L" << pc << ":\n";
    out << "  ";
    if (!text[pc]) {
      out << fmt::format(".word 0x{:016x}\n", image.code[pc]);
      continue;
    }
    const Instruction& in = *text[pc];
    const std::string m = mnemonic(in.op);
    switch (shape_of(in.op)) {
      case Shape::None: out << m; break;
      case Shape::MovB: out << fmt::format("{} r{}, {}", m, in.rd, b_text(in)); break;
      case Shape::AluB: out << fmt::format("{} r{}, r{}, {}", m, in.rd, in.ra, b_text(in)); break;
      case Shape::Br: out << fmt::format("{} L{}", m, in.imm); break;
      case Shape::BrCond: out << fmt::format("{} r{}, r{}, L{}", m, in.ra, in.rb, in.imm); break;
      case Shape::Load: out << fmt::format("{} {}, r{}, [r{}]", m, tag_text(in), in.rd, in.ra); break;
      case Shape::Store: out << fmt::format("{} {}, [r{}], r{}", m, tag_text(in), in.ra, in.rd); break;
      case Shape::Tag: out << fmt::format("{} {}", m, tag_text(in)); break;
      case Shape::Dma: out << fmt::format("{} {}, r{}, r{}, r{}", m, tag_text(in), in.rd, in.ra, in.rb); break;
      case Shape::DmaZero: out << fmt::format("{} {}, r{}, r{}", m, tag_text(in), in.rd, in.rb); break;
      case Shape::Wait:
        if (in.flags & kFlagWaitRegs) out << fmt::format("{} r{}, r{}, ", m, in.rd, in.ra);
        else out << m << " ";
        out << events_text(static_cast<std::uint16_t>(in.imm));
        break;
      case Shape::LineOut: out << fmt::format("{} {}, r{}", m, b_text(in), in.ra); break;
      case Shape::LineIn: out << fmt::format("{} {}, r{}", m, b_text(in), in.rd); break;
      case Shape::RegOnly: out << fmt::format("{} r{}", m, in.rd); break;
      case Shape::Param: out << fmt::format("{} {}, r{}", m, in.imm, in.rd); break;
    }
    out << "\n";
  }
  return out.str();
}

const char* to_string(FindingKind k) {
  switch (k) {
    case FindingKind::WaitNeverSatisfied: return "WaitNeverSatisfied";
    case FindingKind::CompletionBeforeIssue: return "CompletionBeforeIssue";
    case FindingKind::StreamLoopWithoutYield: return "StreamLoopWithoutYield";
  }
  return "?";
}

bool SafetyReport::ok() const {
  return std::none_of(findings.begin(), findings.end(), [](const Finding& f) { return f.severity == Severity::Error; });
}

bool SafetyReport::has(FindingKind k) const {
  return std::any_of(findings.begin(), findings.end(), [k](const Finding& f) { return f.kind == k; });
}

std::string SafetyReport::format() const {
  std::string out;
  for (const auto& f : findings)
    out += fmt::format("pc {}: {}[{}]: {}\n", f.pc, f.severity == Severity::Error ? "error" : "warning",
                       to_string(f.kind), f.message);
  return out;
}

SafetyReport check_safety(const ChannelProgramImage& image) {
  SafetyReport report;
  const std::size_t n = image.code.size();
  std::vector<std::optional<Instruction>> code(n);
  for (std::size_t pc = 0; pc < n; ++pc) code[pc] = Instruction::decode(image.code[pc]);

  std::vector<std::vector<std::uint32_t>> succ(n);
  for (std::size_t pc = 0; pc < n; ++pc) {
    if (!code[pc]) continue;
    const Instruction& in = *code[pc];
    const auto t = static_cast<std::uint32_t>(in.imm);
    auto add = [&](std::uint64_t s) {
      if (s < n) succ[pc].push_back(static_cast<std::uint32_t>(s));
    };
    if (in.op == Opcode::HALT) continue;
    if (in.op == Opcode::BR) {
      add(t);
      continue;
    }
    if (is_branch(in.op)) add(t);
    add(pc + 1);
  }

  constexpr std::uint16_t kCompletionBits =
      event_bit(CpEventKind::DramCompletion) | event_bit(CpEventKind::DmaCompletion);

  // (a) a WAIT that no deliverable event can satisfy.
  for (std::size_t pc = 0; pc < n; ++pc) {
    if (!code[pc] || code[pc]->op != Opcode::WAIT) continue;
    const auto filter = static_cast<std::uint16_t>(static_cast<std::uint32_t>(code[pc]->imm) & 0xFFFF);
    if ((filter & image.declared_events & kKnownEventBits) == 0) {
      report.findings.push_back({FindingKind::WaitNeverSatisfied, Severity::Error, static_cast<std::uint32_t>(pc),
                                 "WAIT filter '" + events_text(filter & kKnownEventBits) +
                                     "' shares no event with the declared set; this wait can never complete"});
    }
  }

  // (b) completion waits reachable from entry along a path with no issue.
  auto issues = [](Opcode op) {
    return op == Opcode::LDA || op == Opcode::LDW || op == Opcode::STA || op == Opcode::STW ||
           op == Opcode::DMA || op == Opcode::DMAZ;
  };
  std::vector<bool> seen(n, false);
  std::vector<std::uint32_t> work;
  if (image.entry_pc < n) {
    work.push_back(image.entry_pc);
    seen[image.entry_pc] = true;
  }
  while (!work.empty()) {
    const auto pc = work.back();
    work.pop_back();
    if (!code[pc]) continue;
    const Instruction& in = *code[pc];
    const auto filter = static_cast<std::uint16_t>(static_cast<std::uint32_t>(in.imm) & kKnownEventBits);
    const bool completion_wait =
        in.op == Opcode::WAITT || (in.op == Opcode::WAIT && filter != 0 && (filter & ~kCompletionBits) == 0);
    if (completion_wait) {
      report.findings.push_back({FindingKind::CompletionBeforeIssue, Severity::Warning, pc,
                                 "waits for a DRAM/DMA completion on a path that has not issued any access"});
    }
    if (issues(in.op)) continue;
    for (auto s : succ[pc]) {
      if (!seen[s]) {
        seen[s] = true;
        work.push_back(s);
      }
    }
  }

  // (c) SEND_LINE inside a cycle that never blocks on an event.
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::uint32_t> stack;
  int counter = 0;
  std::vector<std::vector<std::uint32_t>> sccs;
  std::function<void(std::uint32_t)> strong = [&](std::uint32_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : succ[v]) {
      if (index[w] < 0) {
        strong(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::uint32_t> comp;
      std::uint32_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      sccs.push_back(std::move(comp));
    }
  };
  for (std::uint32_t v = 0; v < n; ++v)
    if (index[v] < 0) strong(v);

  for (auto& comp : sccs) {
    const bool cyclic = comp.size() > 1 ||
                        std::find(succ[comp[0]].begin(), succ[comp[0]].end(), comp[0]) != succ[comp[0]].end();
    if (!cyclic) continue;
    bool sends = false, yields = false;
    std::uint32_t send_pc = 0;
    for (auto pc : comp) {
      if (!code[pc]) continue;
      switch (code[pc]->op) {
        case Opcode::SEND_LINE:
          if (!sends || pc < send_pc) send_pc = pc;
          sends = true;
          break;
        case Opcode::YIELD:
        case Opcode::WAIT:
        case Opcode::WAITT:
        case Opcode::RECV_LINE:
        case Opcode::REPLY_LINE:
        case Opcode::STAT_NEXT: yields = true; break;
        default: break;
      }
    }
    if (sends && !yields) {
      report.findings.push_back({FindingKind::StreamLoopWithoutYield, Severity::Warning, send_pc,
                                 "SEND_LINE loop without YIELD or WAIT; it spins on stream credits if the host stops reading"});
    }
  }

  std::sort(report.findings.begin(), report.findings.end(),
            [](const Finding& a, const Finding& b) { return std::tie(a.pc, a.kind) < std::tie(b.pc, b.kind); });
  return report;
}

}  // namespace mccsim
