#include "mccsim/vm.hpp"

#include <cstring>

namespace mccsim {

const char* to_string(VmStatus s) {
  switch (s) {
    case VmStatus::Idle: return "Idle";
    case VmStatus::Ready: return "Ready";
    case VmStatus::Running: return "Running";
    case VmStatus::Waiting: return "Waiting";
    case VmStatus::Halted: return "Halted";
    case VmStatus::Faulted: return "Faulted";
  }
  return "?";
}

const char* to_string(VmFault f) {
  switch (f) {
    case VmFault::None: return "None";
    case VmFault::NotLoaded: return "NotLoaded";
    case VmFault::BadImage: return "BadImage";
    case VmFault::Unmapped: return "Unmapped";
    case VmFault::Permission: return "Permission";
    case VmFault::AffinityViolation: return "AffinityViolation";
    case VmFault::IllegalOpcode: return "IllegalOpcode";
    case VmFault::DivideByZero: return "DivideByZero";
    case VmFault::EventOverflow: return "EventOverflow";
    case VmFault::BadPc: return "BadPc";
    case VmFault::UndeclaredEvent: return "UndeclaredEvent";
    case VmFault::BadOperand: return "BadOperand";
    case VmFault::DuplicateTag: return "DuplicateTag";
    case VmFault::UnknownTag: return "UnknownTag";
    case VmFault::BadCommand: return "BadCommand";
    case VmFault::BadState: return "BadState";
    case VmFault::BadParam: return "BadParam";
  }
  return "?";
}

const char* to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::Yielded: return "Yielded";
    case StepOutcome::Waiting: return "Waiting";
    case StepOutcome::Halted: return "Halted";
    case StepOutcome::Faulted: return "Faulted";
    case StepOutcome::BudgetExhausted: return "BudgetExhausted";
  }
  return "?";
}

Vm::Vm(std::shared_ptr<const ChannelProgramImage> image) : image_(std::move(image)) {
  decoded_.reserve(image_->code.size());
  for (auto w : image_->code) decoded_.push_back(Instruction::decode(w));
}

void Vm::start(std::span<const std::uint64_t> params) {
  regs_.fill(0);
  params_.fill(0);
  for (std::size_t i = 0; i < params.size() && i < params_.size(); ++i) params_[i] = params[i];
  pc_ = image_->entry_pc;
  fault_ = {};
  wait_filter_ = 0;
  credits_ = image_->effective_credits();
  events_.clear();
  pending_.clear();
  recv_slot_ = 0;
  subscribed_ = false;
  status_ = VmStatus::Ready;
}

std::span<std::uint8_t> Vm::scratch() {
  if (scratch_.empty()) scratch_.assign(kScratchBytes, 0);
  return scratch_;
}

void Vm::raise(VmFault code) {
  if (status_ == VmStatus::Halted || status_ == VmStatus::Faulted) return;
  fault_ = {code, pc_};
  status_ = VmStatus::Faulted;
}

bool Vm::deliver(const CpEvent& ev) {
  if (status_ == VmStatus::Halted || status_ == VmStatus::Faulted) return false;
  if (ev.kind == CpEventKind::Start) {
    if (status_ == VmStatus::Idle) {
      status_ = VmStatus::Ready;
      return true;
    }
    return false;
  }
  if (events_.size() >= kEventQueueCapacity) {
    raise(VmFault::EventOverflow);
    return false;
  }
  events_.push_back(ev);
  if (status_ == VmStatus::Waiting &&
      ((wait_filter_ & event_bit(ev.kind)) != 0 || ev.kind == CpEventKind::Stop)) {
    status_ = VmStatus::Ready;
    return true;
  }
  return false;
}

bool Vm::add_credits(std::uint32_t n) {
  credits_ += n;
  if (status_ == VmStatus::Waiting && (wait_filter_ & kCreditWakeBit) != 0) {
    status_ = VmStatus::Ready;
    return true;
  }
  return false;
}

bool Vm::take_stop() {
  for (auto it = events_.begin(); it != events_.end(); ++it) {
    if (it->kind == CpEventKind::Stop) {
      events_.erase(it);
      return true;
    }
  }
  return false;
}

std::deque<CpEvent>::iterator Vm::find_event(std::uint16_t filter) {
  for (auto it = events_.begin(); it != events_.end(); ++it)
    if ((filter & event_bit(it->kind)) != 0) return it;
  return events_.end();
}

std::deque<CpEvent>::iterator Vm::find_event(CpEventKind kind, std::uint64_t arg) {
  for (auto it = events_.begin(); it != events_.end(); ++it)
    if (it->kind == kind && it->arg == arg) return it;
  return events_.end();
}

std::optional<CacheLine> Vm::scratch_line(std::uint64_t va) {
  if (!in_scratch(va, kLineBytes)) return std::nullopt;
  CacheLine l;
  std::memcpy(l.bytes.data(), scratch().data() + (va - kScratchBase), kLineBytes);
  return l;
}

bool Vm::block(std::uint16_t filter) {
  wait_filter_ = filter;
  status_ = VmStatus::Waiting;
  return true;
}

StepResult Vm::finish(StepResult r, StepOutcome o) {
  r.outcome = o;
  retired_ += r.executed;
  return r;
}

StepResult Vm::step(std::uint64_t budget, SimTime start, VmPort& port) {
  StepResult r;
  switch (status_) {
    case VmStatus::Ready:
    case VmStatus::Running: break;
    case VmStatus::Waiting: return finish(r, StepOutcome::Waiting);
    case VmStatus::Halted:
    case VmStatus::Idle: return finish(r, StepOutcome::Halted);
    case VmStatus::Faulted: return finish(r, StepOutcome::Faulted);
  }
  if (take_stop()) {
    status_ = VmStatus::Halted;
    return finish(r, StepOutcome::Halted);
  }
  status_ = VmStatus::Running;

  auto fail = [&](VmFault code) {
    fault_ = {code, pc_};
    status_ = VmStatus::Faulted;
    return finish(r, StepOutcome::Faulted);
  };
  auto waiting = [&](std::uint16_t filter) {
    block(filter);
    return finish(r, StepOutcome::Waiting);
  };

  while (r.charged < budget) {
    if (pc_ >= decoded_.size()) return fail(VmFault::BadPc);
    const auto& slot = decoded_[pc_];
    if (!slot) return fail(VmFault::IllegalOpcode);
    const Instruction& in = *slot;
    const SimTime at = start + r.executed;
    const std::uint64_t b = in.uses_imm() ? static_cast<std::uint64_t>(static_cast<std::int64_t>(in.imm))
                                          : regs_[in.rb];
    const auto tag = static_cast<std::uint32_t>(in.imm);
    std::uint32_t next = pc_ + 1;
    std::uint64_t extra = 0;

    auto issue = [&](MemRequest req) -> std::optional<VmFault> {
      req.at = at;
      IssueResult ir = port.issue(req);
      extra += ir.charge;
      return ir.fault;
    };

    switch (in.op) {
      case Opcode::NOP: break;
      case Opcode::HALT:
        ++r.executed;
        ++r.charged;
        status_ = VmStatus::Halted;
        return finish(r, StepOutcome::Halted);
      case Opcode::YIELD:
        ++r.executed;
        ++r.charged;
        pc_ = next;
        status_ = VmStatus::Ready;
        return finish(r, StepOutcome::Yielded);
      case Opcode::MOV: regs_[in.rd] = b; break;
      case Opcode::ADD: regs_[in.rd] = regs_[in.ra] + b; break;
      case Opcode::SUB: regs_[in.rd] = regs_[in.ra] - b; break;
      case Opcode::MUL: regs_[in.rd] = regs_[in.ra] * b; break;
      case Opcode::DIV:
        if (b == 0) return fail(VmFault::DivideByZero);
        regs_[in.rd] = regs_[in.ra] / b;
        break;
      case Opcode::REM:
        if (b == 0) return fail(VmFault::DivideByZero);
        regs_[in.rd] = regs_[in.ra] % b;
        break;
      case Opcode::AND: regs_[in.rd] = regs_[in.ra] & b; break;
      case Opcode::OR: regs_[in.rd] = regs_[in.ra] | b; break;
      case Opcode::XOR: regs_[in.rd] = regs_[in.ra] ^ b; break;
      case Opcode::SHL: regs_[in.rd] = regs_[in.ra] << (b & 63); break;
      case Opcode::SHR: regs_[in.rd] = regs_[in.ra] >> (b & 63); break;
      case Opcode::CMP: {
        const std::uint64_t a = regs_[in.ra];
        regs_[in.rd] = a == b ? 0 : (a < b ? ~std::uint64_t{0} : 1);
        break;
      }
      case Opcode::BR: next = tag; break;
      case Opcode::BEQ:
        if (regs_[in.ra] == regs_[in.rb]) next = tag;
        break;
      case Opcode::BNE:
        if (regs_[in.ra] != regs_[in.rb]) next = tag;
        break;
      case Opcode::BLT:
        if (regs_[in.ra] < regs_[in.rb]) next = tag;
        break;
      case Opcode::BGE:
        if (regs_[in.ra] >= regs_[in.rb]) next = tag;
        break;

      case Opcode::LDA:
      case Opcode::LDW:
      case Opcode::STA:
      case Opcode::STW: {
        if (pending_.count(tag)) return fail(VmFault::DuplicateTag);
        const bool load = in.op == Opcode::LDA || in.op == Opcode::LDW;
        const std::uint64_t width = (in.op == Opcode::LDA || in.op == Opcode::STA) ? 8 : 4;
        const std::uint64_t va = regs_[in.ra];
        if (in_scratch(va, width)) {
          auto* p = scratch().data() + (va - kScratchBase);
          CpEvent done{CpEventKind::DramCompletion, at, tag, 0, {}};
          if (load) {
            std::memcpy(&done.value, p, width);
          } else {
            const std::uint64_t v = regs_[in.rd];
            std::memcpy(p, &v, width);
          }
          if (events_.size() >= kEventQueueCapacity) return fail(VmFault::EventOverflow);
          events_.push_back(done);
        } else {
          MemRequest req;
          req.op = load ? (width == 8 ? MemRequest::Op::Load64 : MemRequest::Op::Load32)
                        : (width == 8 ? MemRequest::Op::Store64 : MemRequest::Op::Store32);
          req.tag = tag;
          req.va = va;
          req.len = width;
          req.value = regs_[in.rd];
          if (auto f = issue(req)) return fail(*f);
        }
        pending_[tag] = PendingTag{in.rd, load};
        break;
      }
      case Opcode::WAITT: {
        auto pit = pending_.find(tag);
        if (pit == pending_.end()) return fail(VmFault::UnknownTag);
        auto it = events_.begin();
        for (; it != events_.end(); ++it) {
          if ((it->kind == CpEventKind::DramCompletion || it->kind == CpEventKind::DmaCompletion) &&
              it->arg == tag)
            break;
        }
        if (it == events_.end()) {
          if (take_stop()) {
            status_ = VmStatus::Halted;
            return finish(r, StepOutcome::Halted);
          }
          return waiting(event_bit(CpEventKind::DramCompletion) | event_bit(CpEventKind::DmaCompletion));
        }
        if (pit->second.load) regs_[pit->second.reg] = it->value;
        pending_.erase(pit);
        events_.erase(it);
        break;
      }
      case Opcode::DMA:
      case Opcode::DMAZ: {
        if (pending_.count(tag)) return fail(VmFault::DuplicateTag);
        MemRequest req;
        req.op = in.op == Opcode::DMA ? MemRequest::Op::Dma : MemRequest::Op::DmaZero;
        req.tag = tag;
        req.va = regs_[in.rd];
        req.src_va = regs_[in.ra];
        req.len = regs_[in.rb];
        if (req.len == 0) return fail(VmFault::BadOperand);
        if (auto f = issue(req)) return fail(*f);
        pending_[tag] = PendingTag{0, false};
        break;
      }
      case Opcode::WAIT: {
        const auto filter = static_cast<std::uint16_t>(static_cast<std::uint32_t>(in.imm) & 0xFFFF);
        if ((filter & ~image_->declared_events) != 0) return fail(VmFault::UndeclaredEvent);
        auto it = find_event(filter);
        if (it == events_.end()) {
          if (take_stop()) {
            status_ = VmStatus::Halted;
            return finish(r, StepOutcome::Halted);
          }
          return waiting(filter);
        }
        if (in.flags & kFlagWaitRegs) {
          regs_[in.rd] = static_cast<std::uint64_t>(it->kind);
          regs_[in.ra] = it->arg;
        }
        break;
      }
      case Opcode::SEND_LINE:
      case Opcode::REPLY_LINE: {
        if (!is_line_aligned(b) || b >= kDataAreaBytes) return fail(VmFault::BadOperand);
        const bool send = in.op == Opcode::SEND_LINE;
        std::deque<CpEvent>::iterator req_it = events_.end();
        if (send) {
          if (credits_ == 0) return waiting(kCreditWakeBit);
        } else {
          req_it = find_event(CpEventKind::HostLineRead, b);
          if (req_it == events_.end()) {
            if (take_stop()) {
              status_ = VmStatus::Halted;
              return finish(r, StepOutcome::Halted);
            }
            return waiting(event_bit(CpEventKind::HostLineRead));
          }
        }
        MemRequest req;
        req.op = send ? MemRequest::Op::SendLine : MemRequest::Op::ReplyLine;
        req.va = regs_[in.ra];
        req.len = kLineBytes;
        req.data_offset = b;
        if (Vm::in_scratch(req.va, 1)) {
          req.line = scratch_line(req.va);
          if (!req.line) return fail(VmFault::BadOperand);
        }
        if (auto f = issue(req)) return fail(*f);
        if (send) {
          --credits_;
        } else {
          events_.erase(req_it);
        }
        break;
      }
      case Opcode::RECV_LINE: {
        if (!is_line_aligned(b) || b >= kDataAreaBytes) return fail(VmFault::BadOperand);
        auto it = find_event(CpEventKind::HostLineWrite, b);
        if (it == events_.end()) {
          if (take_stop()) {
            status_ = VmStatus::Halted;
            return finish(r, StepOutcome::Halted);
          }
          return waiting(event_bit(CpEventKind::HostLineWrite));
        }
        const std::uint64_t slot_off = (recv_slot_ % kRecvRingLines) * kLineBytes;
        std::memcpy(scratch().data() + slot_off, it->line.bytes.data(), kLineBytes);
        recv_slot_ = (recv_slot_ + 1) % kRecvRingLines;
        regs_[in.rd] = kScratchBase + slot_off;
        events_.erase(it);
        break;
      }
      case Opcode::STAT_SUB: {
        MemRequest req;
        req.op = MemRequest::Op::Subscribe;
        if (auto f = issue(req)) return fail(*f);
        subscribed_ = true;
        break;
      }
      case Opcode::STAT_NEXT: {
        auto it = find_event(event_bit(CpEventKind::Observe));
        if (it == events_.end()) {
          if (take_stop()) {
            status_ = VmStatus::Halted;
            return finish(r, StepOutcome::Halted);
          }
          return waiting(event_bit(CpEventKind::Observe));
        }
        regs_[in.rd] = it->arg | (it->value & 1);
        events_.erase(it);
        break;
      }
      case Opcode::PARAM:
        if (tag >= image_->param_count) return fail(VmFault::BadParam);
        regs_[in.rd] = params_[tag];
        break;
    }
    pc_ = next;
    ++r.executed;
    r.charged += 1 + extra;
  }
  status_ = VmStatus::Ready;
  return finish(r, StepOutcome::BudgetExhausted);
}

}  // namespace mccsim
