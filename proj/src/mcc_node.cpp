#include "mccsim/mcc_node.hpp"

#include <algorithm>

namespace mccsim {

namespace {

VmFault vm_fault(FaultKind k) {
  switch (k) {
    case FaultKind::Unmapped: return VmFault::Unmapped;
    case FaultKind::Permission: return VmFault::Permission;
    case FaultKind::AffinityViolation: return VmFault::AffinityViolation;
  }
  return VmFault::Unmapped;
}

SimTime bulk_ns(std::uint64_t len, std::uint64_t bytes_per_us) {
  return (len * 1000 + bytes_per_us - 1) / bytes_per_us;
}

}  // namespace

const char* to_string(SchedPolicy p) { return p == SchedPolicy::Wfq ? "wfq" : "rr"; }

const char* to_string(MccStatus s) {
  switch (s) {
    case MccStatus::Idle: return "Idle";
    case MccStatus::Loaded: return "Loaded";
    case MccStatus::Running: return "Running";
    case MccStatus::Halted: return "Halted";
    case MccStatus::Faulted: return "Faulted";
    case MccStatus::Waiting: return "Waiting";
  }
  return "?";
}

void NodeConfig::validate() const {
  if (processors == 0) throw Error(Errc::BadConfig, "a node needs at least one processor");
  if (dram_bytes == 0 || !is_line_aligned(dram_bytes))
    throw Error(Errc::BadConfig, "dram_bytes must be a positive multiple of 64");
}

MccStatus MccInstance::status() const {
  if (!vm) return MccStatus::Idle;
  switch (vm->status()) {
    case VmStatus::Idle: return MccStatus::Loaded;
    case VmStatus::Ready:
    case VmStatus::Running: return MccStatus::Running;
    case VmStatus::Waiting: return MccStatus::Waiting;
    case VmStatus::Halted: return MccStatus::Halted;
    case VmStatus::Faulted: return MccStatus::Faulted;
  }
  return MccStatus::Idle;
}

Node::Node(Engine& engine, Interconnect& ic, const SimConfig& sim, NodeConfig cfg)
    : engine_(engine),
      ic_(ic),
      sim_(sim),
      cfg_(cfg),
      dram_latency_(cfg.dram_latency_ns ? cfg.dram_latency_ns : sim.node_dram_latency_ns),
      actor_(engine.add_actor(*this, "node" + std::to_string(cfg.id))),
      procs_(cfg.processors) {
  cfg_.validate();
  ic_.attach(actor_, cfg_.id);
  engine_.add_blocked_probe([this](std::vector<BlockedMcc>& out) { collect_blocked(out); });
}

std::uint64_t Node::allocate(std::uint64_t len) {
  const std::uint64_t rounded = (len + kLineBytes - 1) / kLineBytes * kLineBytes;
  if (rounded == 0 || rounded > cfg_.dram_bytes - next_free_)
    throw Error(Errc::OutOfFarMemory, "node " + std::to_string(cfg_.id) + " has no room for " +
                                          std::to_string(len) + " bytes");
  const std::uint64_t off = next_free_;
  next_free_ += rounded;
  dram_.resize(next_free_);
  return off;
}

SimTime Node::dram_access(std::uint64_t offset, std::uint64_t len, SimTime at) const {
  if (len == 0 || offset > cfg_.dram_bytes || len > cfg_.dram_bytes - offset)
    throw Error(Errc::OutOfRange, "DRAM access beyond the node's capacity");
  SimTime t = at + dram_latency_;
  if (len > kLineBytes) t += bulk_ns(len, sim_.far_bandwidth_bytes_per_us);
  return t;
}

void Node::admit(MccInstance inst) {
  if (inst.affinity != cfg_.id) throw Error(Errc::AffinityMismatch, "MCC affinity names another node");
  if (inst.weight == 0) throw Error(Errc::BadConfig, "MCC weight must be >= 1");
  if (instances_.count(inst.id)) throw Error(Errc::DuplicateMcc, "MCC id already admitted");
  const MccId id = inst.id;
  instances_.emplace(id, std::move(inst));
}

void Node::remove(MccId id) {
  instances_.erase(id);
  subscribers_.erase(id);
}

MccInstance* Node::find(MccId id) {
  auto it = instances_.find(id);
  return it == instances_.end() ? nullptr : &it->second;
}

const MccInstance* Node::find(MccId id) const {
  auto it = instances_.find(id);
  return it == instances_.end() ? nullptr : &it->second;
}

std::vector<MccId> Node::instance_ids() const {
  std::vector<MccId> ids;
  ids.reserve(instances_.size());
  for (const auto& [id, m] : instances_) ids.push_back(id);
  return ids;
}

void Node::install(MccId id, std::shared_ptr<const ChannelProgramImage> image) {
  MccInstance* m = find(id);
  if (!m) throw Error(Errc::UnknownMcc, "no such MCC on this node");
  m->image = image;
  m->vm = std::make_unique<Vm>(std::move(image));
  m->upload.clear();
  m->control_fault = {};
  ++m->generation;
}

void Node::start(MccId id, std::span<const std::uint64_t> params) {
  MccInstance* m = find(id);
  if (!m) throw Error(Errc::UnknownMcc, "no such MCC on this node");
  std::copy_n(params.begin(), std::min<std::size_t>(params.size(), kMaxParams), m->params.begin());
  command(*m, static_cast<std::uint64_t>(Cmd::Start));
}

void Node::command(MccInstance& m, std::uint64_t cmd) {
  const bool busy = m.vm && m.vm->status() != VmStatus::Idle;
  switch (static_cast<Cmd>(cmd)) {
    case Cmd::Nop: break;
    case Cmd::LoadBegin:
      if (busy) {
        m.control_fault = {VmFault::BadState, 0};
        break;
      }
      m.upload.clear();
      break;
    case Cmd::LoadCommit: {
      if (busy) {
        m.control_fault = {VmFault::BadState, 0};
        break;
      }
      auto parsed = ChannelProgramImage::parse(m.upload);
      if (!parsed.image) {
        // The pc field carries the header error for diagnostics.
        m.control_fault = {VmFault::BadImage, static_cast<std::uint32_t>(parsed.error) + 1};
        break;
      }
      install(m.id, std::make_shared<const ChannelProgramImage>(std::move(*parsed.image)));
      break;
    }
    case Cmd::Start:
      if (!m.vm) {
        m.control_fault = {VmFault::NotLoaded, 0};
        break;
      }
      if (busy) {
        m.control_fault = {VmFault::BadState, 0};
        break;
      }
      m.vm->start(m.params);
      m.stats.started_at = engine_.now();
      m.control_fault = {};
      m.deficit = 0;
      make_ready(m);
      break;
    case Cmd::Stop:
      if (m.vm) post(m, CpEvent{CpEventKind::Stop, engine_.now()});
      break;
    case Cmd::Reset:
      m.vm.reset();
      m.image.reset();
      m.upload.clear();
      m.control_fault = {};
      m.deficit = 0;
      ++m.generation;
      subscribers_.erase(m.id);
      break;
    default: m.control_fault = {VmFault::BadCommand, 0}; break;
  }
}

void Node::control_write(MccId id, std::uint64_t offset, std::uint64_t value) {
  MccInstance* m = find(id);
  if (!m) return;
  if (offset == ctl::kCmd) {
    command(*m, value);
  } else if (offset >= ctl::kParamBase && offset < ctl::kParamBase + 8 * kMaxParams) {
    m->params[(offset - ctl::kParamBase) / 8] = value;
  } else if (offset >= ctl::kUploadBase && offset < ctl::kUploadEnd) {
    if (m->upload.size() <= kImageHeaderBytes + kMaxCodeBytes) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
      m->upload.insert(m->upload.end(), p, p + 8);
    }
  }
}

std::uint64_t Node::control_read(MccId id, std::uint64_t offset) const {
  const MccInstance* m = find(id);
  if (!m) return 0;
  if (offset == ctl::kStatus) return static_cast<std::uint64_t>(m->status());
  if (offset == ctl::kFaultInfo) {
    if (m->vm && m->vm->status() == VmStatus::Faulted) return m->vm->fault().encode();
    return m->control_fault.encode();
  }
  if (offset >= ctl::kParamBase && offset < ctl::kParamBase + 8 * kMaxParams)
    return m->params[(offset - ctl::kParamBase) / 8];
  return 0;
}

void Node::post(MccInstance& m, const CpEvent& ev) {
  if (!m.vm) return;
  if (m.vm->deliver(ev)) make_ready(m);
}

void Node::make_ready(MccInstance& m) {
  if (m.queued || m.on_proc || m.parked || !m.vm) return;
  m.queued = true;
  m.enqueued_at = quanta_;
  ready_.push_back(m.id);
  m.wait_bound = std::uint64_t{cfg_.processors} * ready_.size();
  kick();
}

void Node::kick() {
  std::size_t wanted = ready_.size();
  for (std::uint32_t p = 0; p < procs_.size() && wanted > 0; ++p) {
    if (procs_[p].busy) continue;
    procs_[p].busy = true;
    engine_.schedule(engine_.now(), actor_, DispatchQuantum{p});
    --wanted;
  }
}

bool Node::replica_stale(AppId app) const {
  const AddressSpace* master = services_.address_space ? services_.address_space(app) : nullptr;
  if (!master) return false;
  auto it = replicas_.find(app);
  return it == replicas_.end() || it->second.epoch != master->epoch();
}

void Node::park(MccInstance& m) {
  m.parked = true;
  parked_[m.app].push_back(m.id);
  if (sync_in_flight_.insert(m.app).second) {
    ++resyncs_;
    engine_.schedule_in(round_trip(ic_.config(cfg_.id, kHostPort), 0), actor_, SegmentSync{m.app});
  }
}

void Node::refresh_replica(AppId app) {
  const AddressSpace* master = services_.address_space ? services_.address_space(app) : nullptr;
  if (master) {
    replicas_[app] = master->sync_segments(cfg_.id);
  } else {
    replicas_.erase(app);
  }
  sync_in_flight_.erase(app);
  auto it = parked_.find(app);
  if (it == parked_.end()) return;
  std::vector<MccId> ids = std::move(it->second);
  parked_.erase(it);
  for (MccId id : ids) {
    MccInstance* m = find(id);
    if (!m || !m->parked) continue;
    m->parked = false;
    if (m->vm && m->vm->status() == VmStatus::Ready) make_ready(*m);
  }
}

void Node::dispatch(std::uint32_t p) {
  Processor& pr = procs_[p];
  if (pr.current) {
    if (MccInstance* m = find(*pr.current)) {
      m->on_proc = false;
      if (m->vm && m->vm->status() == VmStatus::Ready) make_ready(*m);
    }
    pr.current.reset();
  }
  while (!ready_.empty()) {
    const MccId id = ready_.front();
    ready_.pop_front();
    MccInstance* m = find(id);
    if (!m || !m->queued) continue;
    m->queued = false;
    if (!m->vm || m->vm->status() != VmStatus::Ready) continue;
    if (replica_stale(m->app)) {
      park(*m);
      continue;
    }

    std::uint64_t budget = sim_.dispatch_step_budget;
    if (cfg_.policy == SchedPolicy::Wfq) {
      m->deficit += static_cast<std::int64_t>(m->weight * sim_.wfq_quantum);
      if (m->deficit <= 0) {
        // Still paying off an expensive previous turn.
        m->queued = true;
        ready_.push_back(id);
        continue;
      }
      budget = static_cast<std::uint64_t>(m->deficit);
    }

    const std::uint64_t waited = quanta_ - m->enqueued_at;
    max_wait_ = std::max(max_wait_, waited);
    if (waited > m->wait_bound) ++starvation_violations_;

    stepping_ = m;
    const StepResult r = m->vm->step(budget, engine_.now(), *this);
    stepping_ = nullptr;

    m->stats.instructions += r.executed;
    ++m->stats.quanta;
    if (r.outcome == StepOutcome::Waiting) m->waiting_since = engine_.now();
    ++quanta_;
    if (cfg_.policy == SchedPolicy::Wfq) {
      m->deficit -= static_cast<std::int64_t>(r.charged);
      if (m->vm->status() != VmStatus::Ready) m->deficit = 0;
    }
    pr.current = id;
    m->on_proc = true;
    engine_.schedule(engine_.now() + std::max<std::uint64_t>(1, r.executed), actor_, DispatchQuantum{p});
    return;
  }
  pr.busy = false;
}

std::optional<Node::Place> Node::place_of(const Translation& t, std::uint64_t len) {
  return std::visit(
      [&](const auto& b) -> std::optional<Place> {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, HostLocal>) {
          const std::uint64_t off = b.offset + t.offset;
          if (!services_.host_memory || off + len > services_.host_memory().size()) return std::nullopt;
          return Place{Loc::HostMemory, 0, off};
        } else if constexpr (std::is_same_v<T, FarDirect>) {
          const std::uint64_t off = b.offset + t.offset;
          if (b.node == cfg_.id) {
            if (off + len > dram_.size()) return std::nullopt;
            return Place{Loc::NodeDram, b.node, off};
          }
          auto* mem = services_.node_memory ? services_.node_memory(b.node) : nullptr;
          if (!mem || off + len > mem->size()) return std::nullopt;
          return Place{Loc::RemoteDram, b.node, off};
        } else {
          return std::nullopt;
        }
      },
      t.backing);
}

std::span<std::uint8_t> Node::bytes_at(const Place& p, std::uint64_t len, MccInstance* m) {
  switch (p.loc) {
    case Loc::NodeDram: return {dram_.data() + p.offset, len};
    case Loc::RemoteDram: return {services_.node_memory(p.node)->data() + p.offset, len};
    case Loc::HostMemory: return {services_.host_memory().data() + p.offset, len};
    case Loc::Scratch: return m->vm->scratch().subspan(p.offset, len);
  }
  return {};
}

SimTime Node::access_latency(const Place& p) const {
  const LinkConfig& link = ic_.config(cfg_.id, kHostPort);
  switch (p.loc) {
    case Loc::NodeDram: return dram_latency_;
    case Loc::RemoteDram: return round_trip(link, sim_.node_dram_latency_ns);
    case Loc::HostMemory: return round_trip(link, sim_.host_dram_latency_ns);
    case Loc::Scratch: return 1;
  }
  return 1;
}

std::uint64_t Node::charge_for(SimTime issued, SimTime done) const {
  return cfg_.policy == SchedPolicy::Wfq ? done - issued : 0;
}

void Node::log_access(const MccInstance& m, const MemRequest&, std::uint64_t va, std::uint64_t len,
                      bool write, const Place& p) {
  if (!log_accesses_ || p.loc == Loc::Scratch) return;
  AccessRecord r;
  r.mcc = m.id;
  r.app = m.app;
  r.va = va;
  r.len = len;
  r.write = write;
  r.where = p.loc == Loc::HostMemory ? AccessRecord::Where::HostMemory : AccessRecord::Where::NodeDram;
  r.node = p.loc == Loc::HostMemory ? 0 : p.node;
  r.phys = p.offset;
  access_log_.push_back(r);
}

IssueResult Node::issue(const MemRequest& req) {
  MccInstance& m = *stepping_;
  const Requester who = Requester::mcc_on(m.id, cfg_.id);
  auto rit = replicas_.find(m.app);
  const SegmentReplica* rep = rit == replicas_.end() ? nullptr : &rit->second;

  // Resolves one end of an access; scratch addresses never leave the MCC.
  auto resolve = [&](std::uint64_t va, std::uint64_t len, Access a) -> std::variant<Place, VmFault> {
    if (Vm::in_scratch(va, len)) return Place{Loc::Scratch, cfg_.id, va - kScratchBase};
    if (!rep) return VmFault::Unmapped;
    const TranslateResult tr = rep->translate(va, len, a, who);
    if (!tr) return vm_fault(tr.fault);
    auto place = place_of(*tr.ok, len);
    if (!place) return VmFault::Unmapped;
    log_access(m, req, va, len, a == Access::Write, *place);
    return *place;
  };
  auto is_dram = [](const Place& p) { return p.loc == Loc::NodeDram || p.loc == Loc::RemoteDram; };

  IssueResult out;
  switch (req.op) {
    case MemRequest::Op::Load64:
    case MemRequest::Op::Load32:
    case MemRequest::Op::Store64:
    case MemRequest::Op::Store32: {
      const bool write = req.op == MemRequest::Op::Store64 || req.op == MemRequest::Op::Store32;
      auto r = resolve(req.va, req.len, write ? Access::Write : Access::Read);
      if (auto* f = std::get_if<VmFault>(&r)) {
        out.fault = *f;
        return out;
      }
      const Place place = std::get<Place>(r);
      const SimTime done = req.at + access_latency(place);
      const std::uint64_t op = next_op_++;
      pending_[op] = PendingOp{m.id, m.generation, req, place, {}};
      engine_.schedule(done, actor_, DramCompletion{m.id, op});
      if (is_dram(place)) m.stats.dram_bytes += req.len;
      out.charge = charge_for(req.at, done);
      return out;
    }
    case MemRequest::Op::Dma:
    case MemRequest::Op::DmaZero: {
      const bool copy = req.op == MemRequest::Op::Dma;
      auto d = resolve(req.va, req.len, Access::Write);
      if (auto* f = std::get_if<VmFault>(&d)) {
        out.fault = *f;
        return out;
      }
      Place dst = std::get<Place>(d);
      Place src{Loc::Scratch, cfg_.id, 0};
      if (copy) {
        auto s = resolve(req.src_va, req.len, Access::Read);
        if (auto* f = std::get_if<VmFault>(&s)) {
          out.fault = *f;
          return out;
        }
        src = std::get<Place>(s);
      }
      const LinkConfig& link = ic_.config(cfg_.id, kHostPort);
      const bool host_dst = dst.loc == Loc::HostMemory;
      const bool host_src = copy && src.loc == Loc::HostMemory;
      const bool remote = dst.loc == Loc::RemoteDram || (copy && src.loc == Loc::RemoteDram);
      const bool dram = is_dram(dst) || (copy && is_dram(src));
      SimTime latency = 1;
      SimTime xfer_end = req.at + bulk_ns(req.len, sim_.far_bandwidth_bytes_per_us);
      if (host_dst || host_src) {
        latency = link.one_way();
        xfer_end = host_dst ? ic_.reserve(cfg_.id, kHostPort, req.len, req.at)
                            : ic_.reserve(kHostPort, cfg_.id, req.len, req.at);
      } else if (remote) {
        latency = round_trip(link, sim_.node_dram_latency_ns);
      } else if (dram) {
        latency = dram_latency_;
      }
      const SimTime done = std::max(req.at + latency, xfer_end);
      const std::uint64_t op = next_op_++;
      pending_[op] = PendingOp{m.id, m.generation, req, dst, src};
      engine_.schedule(done, actor_, DmaCompletion{m.id, op});
      m.stats.dma_bytes += req.len;
      if (is_dram(dst)) m.stats.dram_bytes += req.len;
      if (copy && is_dram(src)) m.stats.dram_bytes += req.len;
      out.charge = charge_for(req.at, done);
      return out;
    }
    case MemRequest::Op::SendLine:
    case MemRequest::Op::ReplyLine: {
      CacheLine line;
      SimTime t = req.at;
      if (req.line) {
        line = *req.line;
      } else {
        auto r = resolve(req.va, kLineBytes, Access::Read);
        if (auto* f = std::get_if<VmFault>(&r)) {
          out.fault = *f;
          return out;
        }
        const Place place = std::get<Place>(r);
        auto b = bytes_at(place, kLineBytes, &m);
        std::copy(b.begin(), b.end(), line.bytes.begin());
        t += access_latency(place);
        if (is_dram(place)) m.stats.dram_bytes += kLineBytes;
      }
      const bool streamed = req.op == MemRequest::Op::SendLine;
      if (streamed) ++m.stats.stream_lines;
      if (m.host_actor != kNoActor) {
        CoherenceMessage msg;
        msg.kind = MsgKind::DataResp;
        msg.line_addr = req.data_offset;
        msg.src = actor_;
        msg.dst = m.host_actor;
        msg.app = m.app;
        msg.target = TargetKind::Data;
        msg.mcc = m.id;
        msg.offset = req.data_offset;
        msg.streamed = streamed;
        msg.line = line;
        ic_.send(std::move(msg), t);
      }
      if (cfg_.policy == SchedPolicy::Wfq)
        out.charge = (t - req.at) + (ic_.config(cfg_.id, kHostPort).serialization_ps(kLineBytes) + 999) / 1000;
      return out;
    }
    case MemRequest::Op::Subscribe:
      subscribers_.insert(m.id);
      return out;
  }
  return out;
}

void Node::on_completion(std::uint64_t op, bool dma) {
  auto it = pending_.find(op);
  if (it == pending_.end()) return;
  const PendingOp p = std::move(it->second);
  pending_.erase(it);
  MccInstance* m = find(p.mcc);
  if (!m || m->generation != p.generation || !m->vm) return;

  if (dma) m->stats.last_dma_completion = engine_.now();
  CpEvent ev{dma ? CpEventKind::DmaCompletion : CpEventKind::DramCompletion, engine_.now(), p.req.tag};
  switch (p.req.op) {
    case MemRequest::Op::Load64:
    case MemRequest::Op::Load32: {
      auto b = bytes_at(p.dst, p.req.len, m);
      std::memcpy(&ev.value, b.data(), p.req.len);
      break;
    }
    case MemRequest::Op::Store64:
    case MemRequest::Op::Store32: {
      auto b = bytes_at(p.dst, p.req.len, m);
      std::memcpy(b.data(), &p.req.value, p.req.len);
      break;
    }
    case MemRequest::Op::Dma: {
      auto s = bytes_at(p.src, p.req.len, m);
      std::vector<std::uint8_t> tmp(s.begin(), s.end());
      auto d = bytes_at(p.dst, p.req.len, m);
      std::copy(tmp.begin(), tmp.end(), d.begin());
      break;
    }
    case MemRequest::Op::DmaZero: {
      auto d = bytes_at(p.dst, p.req.len, m);
      std::fill(d.begin(), d.end(), 0);
      break;
    }
    default: break;
  }
  post(*m, ev);
}

void Node::reply(const CoherenceMessage& req, MsgKind kind, SimTime at, std::uint64_t value,
                 const CacheLine* line) {
  CoherenceMessage r;
  r.kind = kind;
  r.line_addr = req.line_addr;
  r.src = actor_;
  r.dst = req.src;
  r.app = req.app;
  r.target = req.target;
  r.mcc = req.mcc;
  r.offset = req.offset;
  r.control = req.control;
  r.value = value;
  if (line) r.line = *line;
  ic_.send(std::move(r), at);
}

void Node::on_message(const CoherenceMessage& msg) {
  const SimTime now = engine_.now();
  if (msg.control == ControlOp::Credit) {
    MccInstance* m = find(msg.mcc);
    if (m && m->vm && m->vm->add_credits(static_cast<std::uint32_t>(msg.value))) make_ready(*m);
    return;
  }
  if (msg.control == ControlOp::SegmentSync) {
    refresh_replica(msg.app);
    reply(msg, MsgKind::Ack, now);
    return;
  }
  switch (msg.target) {
    case TargetKind::FarDram: {
      const bool write = msg.kind == MsgKind::StoreReq;
      for (MccId sid : subscribers_) {
        MccInstance* s = find(sid);
        if (s && s->app == msg.app)
          post(*s, CpEvent{CpEventKind::Observe, now, msg.line_addr, write ? 1u : 0u});
      }
      const bool in_range = msg.offset + kLineBytes <= dram_.size();
      const SimTime done = dram_access(msg.offset, kLineBytes, now);
      if (write) {
        if (in_range) std::memcpy(dram_.data() + msg.offset, msg.line.bytes.data(), kLineBytes);
        reply(msg, MsgKind::Ack, done);
      } else {
        CacheLine l;
        if (in_range) std::memcpy(l.bytes.data(), dram_.data() + msg.offset, kLineBytes);
        reply(msg, MsgKind::DataResp, done, 0, &l);
      }
      break;
    }
    case TargetKind::Control:
      if (msg.kind == MsgKind::StoreReq) {
        control_write(msg.mcc, msg.offset, msg.value);
        reply(msg, MsgKind::Ack, now);
      } else {
        reply(msg, MsgKind::DataResp, now, control_read(msg.mcc, msg.offset));
      }
      break;
    case TargetKind::Data: {
      MccInstance* m = find(msg.mcc);
      if (!m) break;
      if (msg.kind == MsgKind::StoreReq) {
        post(*m, CpEvent{CpEventKind::HostLineWrite, now, msg.offset, 0, msg.line});
      } else if (msg.kind == MsgKind::LoadReq) {
        post(*m, CpEvent{CpEventKind::HostLineRead, now, msg.offset});
      }
      break;
    }
    case TargetKind::None: break;
  }
}

void Node::on_event(const SimEvent& ev) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MessageDelivery>) {
          on_message(p.msg);
        } else if constexpr (std::is_same_v<T, DramCompletion>) {
          on_completion(p.op, false);
        } else if constexpr (std::is_same_v<T, DmaCompletion>) {
          on_completion(p.op, true);
        } else if constexpr (std::is_same_v<T, DispatchQuantum>) {
          dispatch(p.processor);
        } else if constexpr (std::is_same_v<T, SegmentSync>) {
          refresh_replica(p.app);
        }
      },
      ev.payload);
}

void Node::collect_blocked(std::vector<BlockedMcc>& out) const {
  for (const auto& [id, m] : instances_)
    if (m.vm && m.vm->status() == VmStatus::Waiting && !m.parked) out.push_back({id, m.waiting_since});
}

}  // namespace mccsim
