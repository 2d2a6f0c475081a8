#include "mccsim/host_api.hpp"

#include <algorithm>

namespace mccsim {

HostApp::HostApp(System& sys, AppId id)
    : sys_(sys),
      id_(id),
      actor_(sys.engine().add_actor(*this, "app" + std::to_string(id))),
      as_(id, sys.config().strict_affinity) {
  sys_.interconnect().attach(actor_, kHostPort);
}

const SimConfig& HostApp::config() const { return sys_.config(); }

Segment HostApp::map_far(NodeId node, std::uint64_t len, std::uint8_t perms) {
  Node& n = sys_.node(node);
  if (len == 0 || !is_line_aligned(len)) throw Error(Errc::BadLength, "far mapping length must be a positive multiple of 64");
  const std::uint64_t off = n.allocate(len);
  return as_.map_far(node, off, len, perms);
}

Segment HostApp::map_host(std::uint64_t len, std::uint8_t perms) {
  if (len == 0 || !is_line_aligned(len)) throw Error(Errc::BadLength, "host mapping length must be a positive multiple of 64");
  const std::uint64_t off = sys_.allocate_host(len);
  return as_.map_host(off, len, perms);
}

MccHandle HostApp::mcc_create(NodeId node, std::uint32_t weight) {
  Node& n = sys_.node(node);
  if (weight == 0) throw Error(Errc::BadConfig, "MCC weight must be >= 1");
  const MccId id = sys_.next_mcc_id();
  auto [control, data] = as_.map_mcc(id, kControlAreaBytes, kDataAreaBytes);
  MccInstance inst;
  inst.id = id;
  inst.app = id_;
  inst.affinity = node;
  inst.host_actor = actor_;
  inst.weight = weight;
  n.admit(std::move(inst));
  mcc_nodes_[id] = node;
  return MccHandle{id, node, id_, control.base_va, data.base_va};
}

void HostApp::mcc_destroy(const MccHandle& h) {
  sys_.node(h.node).remove(h.id);
  as_.unmap(h.control_va);
  as_.unmap(h.data_va);
  mcc_nodes_.erase(h.id);
}

Translation HostApp::translate_or_throw(std::uint64_t va, std::uint64_t len, Access a) const {
  const TranslateResult r = as_.translate_range(va, len, a, Requester::host());
  if (!r) throw AccessFault(r.fault, va);
  return *r.ok;
}

Node& HostApp::node_of(MccId mcc) const {
  auto it = mcc_nodes_.find(mcc);
  if (it == mcc_nodes_.end()) throw Error(Errc::UnknownMcc, "MCC not owned by this app");
  return sys_.node(it->second);
}

std::vector<std::uint8_t> HostApp::peek(std::uint64_t va, std::uint64_t len) const {
  const Segment* seg = as_.find(va);
  if (!seg || len > seg->end_va() - va) throw AccessFault(FaultKind::Unmapped, va);
  const std::uint64_t off = va - seg->base_va;
  std::vector<std::uint8_t> out(len);
  if (const auto* f = std::get_if<FarDirect>(&seg->backing)) {
    const auto& mem = sys_.node(f->node).dram();
    std::copy_n(mem.begin() + static_cast<std::ptrdiff_t>(f->offset + off), len, out.begin());
  } else if (const auto* h = std::get_if<HostLocal>(&seg->backing)) {
    const auto& mem = const_cast<System&>(sys_).host_memory();
    std::copy_n(mem.begin() + static_cast<std::ptrdiff_t>(h->offset + off), len, out.begin());
  } else {
    throw Error(Errc::OutOfRange, "MCC areas cannot be peeked");
  }
  return out;
}

void HostApp::poke(std::uint64_t va, std::span<const std::uint8_t> bytes) {
  const Segment* seg = as_.find(va);
  if (!seg || bytes.size() > seg->end_va() - va) throw AccessFault(FaultKind::Unmapped, va);
  const std::uint64_t off = va - seg->base_va;
  if (const auto* f = std::get_if<FarDirect>(&seg->backing)) {
    auto& mem = sys_.node(f->node).dram();
    std::copy(bytes.begin(), bytes.end(), mem.begin() + static_cast<std::ptrdiff_t>(f->offset + off));
  } else if (const auto* h = std::get_if<HostLocal>(&seg->backing)) {
    auto& mem = sys_.host_memory();
    std::copy(bytes.begin(), bytes.end(), mem.begin() + static_cast<std::ptrdiff_t>(h->offset + off));
  } else {
    throw Error(Errc::OutOfRange, "MCC areas cannot be poked");
  }
}

void HostApp::begin(WaitKind kind) {
  if (pending_.kind != WaitKind::None || waiter_)
    throw Error(Errc::ScriptBusy, "the driver already has an outstanding blocking operation");
  pending_ = Pending{};
  pending_.kind = kind;
}

void HostApp::arm_timeout(SimTime timeout) {
  pending_.timeout_token = next_token_++;
  pending_.timeout = sys_.engine().schedule_in(timeout, actor_, HostScriptStep{pending_.timeout_token});
}

void HostApp::wake() {
  if (pending_.timeout && !pending_.timed_out) sys_.engine().cancel(*pending_.timeout);
  pending_.timeout.reset();
  pending_.kind = WaitKind::None;
  auto h = std::exchange(waiter_, {});
  ++steps_;
  if (h) h.resume();
}

CoherenceMessage HostApp::request(MsgKind kind, TargetKind target, NodeId node, std::uint64_t line_addr) const {
  CoherenceMessage m;
  m.kind = kind;
  m.line_addr = line_addr;
  m.src = actor_;
  m.dst = sys_.node(node).actor();
  m.app = id_;
  m.target = target;
  return m;
}

void HostApp::send_credit(MccId mcc) {
  CoherenceMessage m = request(MsgKind::Ack, TargetKind::None, node_of(mcc).id(), 0);
  m.control = ControlOp::Credit;
  m.mcc = mcc;
  m.value = 1;
  sys_.interconnect().send(std::move(m));
}

CacheLine HostApp::consume(Mailbox& mb, MccId mcc) {
  const CacheLine line = mb.line;
  const bool streamed = mb.streamed;
  mb.full = false;
  mb.streamed = false;
  if (streamed) send_credit(mcc);
  return line;
}

Task<void> HostApp::compute(SimTime ns) {
  begin(WaitKind::Timer);
  pending_.token = next_token_++;
  sys_.engine().schedule_in(ns, actor_, HostScriptStep{pending_.token});
  co_await Park{this};
}

Task<CacheLine> HostApp::far_read_line(std::uint64_t va) {
  const std::uint64_t line = line_floor(va);
  const Translation t = translate_or_throw(line, kLineBytes, Access::Read);
  const auto* fd = std::get_if<FarDirect>(&t.backing);
  if (!fd) throw Error(Errc::OutOfRange, "not a far-memory address");
  CoherenceMessage m = request(MsgKind::LoadReq, TargetKind::FarDram, fd->node, line);
  m.offset = fd->offset + t.offset;
  begin(WaitKind::Response);
  pending_.target = TargetKind::FarDram;
  pending_.expect = MsgKind::DataResp;
  pending_.line_addr = line;
  sys_.interconnect().send(std::move(m));
  co_await Park{this};
  co_return pending_.response.line;
}

Task<void> HostApp::far_write_line(std::uint64_t va, CacheLine data) {
  const std::uint64_t line = line_floor(va);
  const Translation t = translate_or_throw(line, kLineBytes, Access::Write);
  const auto* fd = std::get_if<FarDirect>(&t.backing);
  if (!fd) throw Error(Errc::OutOfRange, "not a far-memory address");
  CoherenceMessage m = request(MsgKind::StoreReq, TargetKind::FarDram, fd->node, line);
  m.offset = fd->offset + t.offset;
  m.line = data;
  begin(WaitKind::Response);
  pending_.target = TargetKind::FarDram;
  pending_.expect = MsgKind::Ack;
  pending_.line_addr = line;
  sys_.interconnect().send(std::move(m));
  co_await Park{this};
}

Task<std::vector<std::uint8_t>> HostApp::far_read(std::uint64_t va, std::uint64_t len) {
  translate_or_throw(va, len, Access::Read);
  const std::uint64_t first = line_floor(va);
  std::vector<std::uint8_t> buf;
  buf.reserve(len + 2 * kLineBytes);
  for (std::uint64_t l = first; l < va + len; l += kLineBytes) {
    const CacheLine c = co_await far_read_line(l);
    buf.insert(buf.end(), c.bytes.begin(), c.bytes.end());
  }
  const auto skip = static_cast<std::ptrdiff_t>(va - first);
  co_return std::vector<std::uint8_t>(buf.begin() + skip, buf.begin() + skip + static_cast<std::ptrdiff_t>(len));
}

Task<void> HostApp::far_write(std::uint64_t va, std::vector<std::uint8_t> bytes) {
  const std::uint64_t len = bytes.size();
  translate_or_throw(va, len, Access::Write);
  for (std::uint64_t l = line_floor(va); l < va + len; l += kLineBytes) {
    const std::uint64_t lo = std::max(l, va);
    const std::uint64_t hi = std::min(l + kLineBytes, va + len);
    CacheLine c;
    if (hi - lo != kLineBytes) c = co_await far_read_line(l);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(lo - va), bytes.begin() + static_cast<std::ptrdiff_t>(hi - va),
              c.bytes.begin() + static_cast<std::ptrdiff_t>(lo - l));
    co_await far_write_line(l, c);
  }
}

Task<std::uint64_t> HostApp::mmio_read(std::uint64_t va) {
  const Translation t = translate_or_throw(va, 8, Access::Read);
  const auto* c = std::get_if<MccControl>(&t.backing);
  if (!c) throw Error(Errc::OutOfRange, "not a control-area address");
  CoherenceMessage m = request(MsgKind::LoadReq, TargetKind::Control, node_of(c->mcc).id(), va);
  m.mcc = c->mcc;
  m.offset = t.offset;
  begin(WaitKind::Response);
  pending_.target = TargetKind::Control;
  pending_.expect = MsgKind::DataResp;
  pending_.line_addr = va;
  sys_.interconnect().send(std::move(m));
  co_await Park{this};
  co_return pending_.response.value;
}

Task<void> HostApp::mmio_write(std::uint64_t va, std::uint64_t value) {
  const Translation t = translate_or_throw(va, 8, Access::Write);
  const auto* c = std::get_if<MccControl>(&t.backing);
  if (!c) throw Error(Errc::OutOfRange, "not a control-area address");
  CoherenceMessage m = request(MsgKind::StoreReq, TargetKind::Control, node_of(c->mcc).id(), va);
  m.mcc = c->mcc;
  m.offset = t.offset;
  m.value = value;
  begin(WaitKind::Response);
  pending_.target = TargetKind::Control;
  pending_.expect = MsgKind::Ack;
  pending_.line_addr = va;
  sys_.interconnect().send(std::move(m));
  co_await Park{this};
}

Task<CacheLine> HostApp::data_read(std::uint64_t va) {
  const Translation t = translate_or_throw(va, 1, Access::Read);
  const auto* d = std::get_if<MccData>(&t.backing);
  if (!d) throw Error(Errc::OutOfRange, "not a data-area address");
  const MccId mcc = d->mcc;
  const std::uint64_t off = line_floor(t.offset);
  const auto key = std::make_pair(mcc, off);
  if (mailboxes_[key].full) {
    const CacheLine hit = consume(mailboxes_[key], mcc);
    co_await compute(sys_.config().host_cache_hit_ns);
    co_return hit;
  }
  CoherenceMessage m = request(MsgKind::LoadReq, TargetKind::Data, node_of(mcc).id(), line_floor(va));
  m.mcc = mcc;
  m.offset = off;
  begin(WaitKind::Mailbox);
  pending_.mcc = mcc;
  pending_.offset = off;
  arm_timeout(sys_.config().watchdog_ns);
  sys_.interconnect().send(std::move(m));
  co_await Park{this};
  if (pending_.timed_out) throw Error(Errc::ReadTimeout, "data-area read was not answered");
  co_return consume(mailboxes_[key], mcc);
}

void HostApp::data_write(std::uint64_t va, const CacheLine& line) {
  const Translation t = translate_or_throw(va, 1, Access::Write);
  const auto* d = std::get_if<MccData>(&t.backing);
  if (!d) throw Error(Errc::OutOfRange, "not a data-area address");
  CoherenceMessage m = request(MsgKind::StoreReq, TargetKind::Data, node_of(d->mcc).id(), line_floor(va));
  m.mcc = d->mcc;
  m.offset = line_floor(t.offset);
  m.line = line;
  sys_.interconnect().send(std::move(m));
}

Task<std::optional<CacheLine>> HostApp::data_poll(std::uint64_t va) {
  const Translation t = translate_or_throw(va, 1, Access::Read);
  const auto* d = std::get_if<MccData>(&t.backing);
  if (!d) throw Error(Errc::OutOfRange, "not a data-area address");
  const MccId mcc = d->mcc;
  const auto key = std::make_pair(mcc, line_floor(t.offset));
  co_await compute(sys_.config().host_cache_hit_ns);
  Mailbox& mb = mailboxes_[key];
  if (!mb.full) co_return std::nullopt;
  co_return consume(mb, mcc);
}

Task<CacheLine> HostApp::data_wait(std::uint64_t va, SimTime timeout) {
  const Translation t = translate_or_throw(va, 1, Access::Read);
  const auto* d = std::get_if<MccData>(&t.backing);
  if (!d) throw Error(Errc::OutOfRange, "not a data-area address");
  const MccId mcc = d->mcc;
  const std::uint64_t off = line_floor(t.offset);
  const auto key = std::make_pair(mcc, off);
  if (!mailboxes_[key].full) {
    begin(WaitKind::Mailbox);
    pending_.mcc = mcc;
    pending_.offset = off;
    arm_timeout(timeout);
    co_await Park{this};
    if (pending_.timed_out) throw Error(Errc::ReadTimeout, "no line arrived in the data area");
  }
  const CacheLine line = consume(mailboxes_[key], mcc);
  co_await compute(sys_.config().host_cache_hit_ns);
  co_return line;
}

Task<std::vector<std::uint8_t>> HostApp::local_read(std::uint64_t va, std::uint64_t len) {
  const Translation t = translate_or_throw(va, len, Access::Read);
  const auto* h = std::get_if<HostLocal>(&t.backing);
  if (!h) throw Error(Errc::OutOfRange, "not a host-local address");
  const std::uint64_t off = h->offset + t.offset;
  co_await compute(sys_.config().host_dram_latency_ns);
  const auto& mem = sys_.host_memory();
  co_return std::vector<std::uint8_t>(mem.begin() + static_cast<std::ptrdiff_t>(off),
                                      mem.begin() + static_cast<std::ptrdiff_t>(off + len));
}

Task<void> HostApp::local_write(std::uint64_t va, std::vector<std::uint8_t> bytes) {
  const Translation t = translate_or_throw(va, bytes.size(), Access::Write);
  const auto* h = std::get_if<HostLocal>(&t.backing);
  if (!h) throw Error(Errc::OutOfRange, "not a host-local address");
  const std::uint64_t off = h->offset + t.offset;
  co_await compute(sys_.config().host_dram_latency_ns);
  std::copy(bytes.begin(), bytes.end(), sys_.host_memory().begin() + static_cast<std::ptrdiff_t>(off));
}

Task<void> HostApp::unmap(std::uint64_t base_va) {
  if (!as_.unmap(base_va)) throw Error(Errc::OutOfRange, "no segment starts at that address");
  const std::vector<NodeId> nodes = sys_.node_ids();
  if (nodes.empty()) co_return;
  begin(WaitKind::SyncAcks);
  pending_.acks_left = static_cast<std::uint32_t>(nodes.size());
  for (NodeId n : nodes) {
    CoherenceMessage m = request(MsgKind::LoadReq, TargetKind::None, n, 0);
    m.control = ControlOp::SegmentSync;
    sys_.interconnect().send(std::move(m));
  }
  co_await Park{this};
}

Task<void> HostApp::load_program(MccHandle h, std::shared_ptr<const ChannelProgramImage> image) {
  const std::uint64_t cmd = h.control_va + ctl::kCmd;
  co_await mmio_write(cmd, static_cast<std::uint64_t>(Cmd::LoadBegin));
  const std::vector<std::uint8_t> bytes = image->serialize();
  const std::uint64_t window = ctl::kUploadEnd - ctl::kUploadBase;
  for (std::size_t i = 0; i < bytes.size(); i += 8) {
    std::uint64_t w = 0;
    std::memcpy(&w, bytes.data() + i, std::min<std::size_t>(8, bytes.size() - i));
    co_await mmio_write(h.control_va + ctl::kUploadBase + (i % window), w);
  }
  co_await mmio_write(cmd, static_cast<std::uint64_t>(Cmd::LoadCommit));
  const std::uint64_t st = co_await mmio_read(h.control_va + ctl::kStatus);
  if (st != static_cast<std::uint64_t>(MccStatus::Loaded)) {
    const std::uint64_t fi = co_await mmio_read(h.control_va + ctl::kFaultInfo);
    throw Error(Errc::BadImage, "LOAD_COMMIT rejected the image (fault info " + std::to_string(fi) + ")");
  }
}

Task<void> HostApp::start(MccHandle h, std::vector<std::uint64_t> params) {
  for (std::size_t i = 0; i < params.size() && i < kMaxParams; ++i)
    co_await mmio_write(h.control_va + ctl::kParamBase + 8 * i, params[i]);
  co_await mmio_write(h.control_va + ctl::kCmd, static_cast<std::uint64_t>(Cmd::Start));
}

Task<void> HostApp::stop(MccHandle h) {
  co_await mmio_write(h.control_va + ctl::kCmd, static_cast<std::uint64_t>(Cmd::Stop));
}

Task<void> HostApp::reset(MccHandle h) {
  co_await mmio_write(h.control_va + ctl::kCmd, static_cast<std::uint64_t>(Cmd::Reset));
}

Task<MccStatus> HostApp::status(MccHandle h) {
  const std::uint64_t v = co_await mmio_read(h.control_va + ctl::kStatus);
  co_return static_cast<MccStatus>(v);
}

Task<std::uint64_t> HostApp::fault_info(MccHandle h) {
  const std::uint64_t v = co_await mmio_read(h.control_va + ctl::kFaultInfo);
  co_return v;
}

Task<MccStatus> HostApp::wait_finished(MccHandle h, SimTime poll_ns, SimTime timeout) {
  const SimTime deadline = sys_.engine().now() + timeout;
  for (;;) {
    const MccStatus st = co_await status(h);
    if (st == MccStatus::Halted || st == MccStatus::Faulted) co_return st;
    if (sys_.engine().now() >= deadline) co_return st;
    co_await compute(poll_ns);
  }
}

void HostApp::spawn(Task<void> script) {
  script_ = std::move(script);
  start_token_ = next_token_++;
  sys_.engine().schedule_in(0, actor_, HostScriptStep{start_token_});
}

void HostApp::on_message(const CoherenceMessage& msg) {
  if (msg.kind == MsgKind::DataResp && msg.target == TargetKind::Data) {
    const auto key = std::make_pair(msg.mcc, msg.offset);
    Mailbox& mb = mailboxes_[key];
    // The mailbox holds one line; an unread streamed line gives back its credit.
    if (mb.full && mb.streamed) send_credit(msg.mcc);
    mb.line = msg.line;
    mb.full = true;
    mb.streamed = msg.streamed;
    if (pending_.kind == WaitKind::Mailbox && pending_.mcc == msg.mcc && pending_.offset == msg.offset) wake();
    return;
  }
  if (msg.control == ControlOp::SegmentSync) {
    if (pending_.kind == WaitKind::SyncAcks && --pending_.acks_left == 0) wake();
    return;
  }
  if (pending_.kind == WaitKind::Response && msg.kind == pending_.expect && msg.target == pending_.target &&
      msg.line_addr == pending_.line_addr) {
    pending_.response = msg;
    wake();
  }
}

void HostApp::on_event(const SimEvent& ev) {
  if (const auto* m = std::get_if<MessageDelivery>(&ev.payload)) {
    on_message(m->msg);
    return;
  }
  const auto* step = std::get_if<HostScriptStep>(&ev.payload);
  if (!step) return;
  if (step->token == start_token_ && script_.valid()) {
    start_token_ = 0;
    ++steps_;
    script_.handle().resume();
    return;
  }
  if (pending_.kind == WaitKind::Timer && step->token == pending_.token) {
    wake();
    return;
  }
  if (pending_.kind != WaitKind::None && pending_.timeout_token == step->token) {
    pending_.timed_out = true;
    wake();
  }
}

System::System(SimConfig cfg, std::vector<NodeConfig> nodes)
    : cfg_(cfg), engine_(cfg.seed, cfg.watchdog_ns), ic_(engine_, LinkConfig::from(cfg)) {
  cfg_.validate();
  for (const NodeConfig& nc : nodes) {
    if (nc.id == kHostPort) throw Error(Errc::BadConfig, "node id reserved for the host");
    if (nodes_.count(nc.id)) throw Error(Errc::BadConfig, "duplicate node id " + std::to_string(nc.id));
    auto node = std::make_unique<Node>(engine_, ic_, cfg_, nc);
    NodeServices services;
    services.address_space = [this](AppId a) { return address_space(a); };
    services.host_memory = [this]() -> std::vector<std::uint8_t>& { return host_mem_; };
    services.node_memory = [this](NodeId n) -> std::vector<std::uint8_t>* {
      auto it = nodes_.find(n);
      return it == nodes_.end() ? nullptr : &it->second->dram();
    };
    node->bind(std::move(services));
    nodes_.emplace(nc.id, std::move(node));
  }
}

Node& System::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::UnknownNode, "no node " + std::to_string(id));
  return *it->second;
}

std::vector<NodeId> System::node_ids() const {
  std::vector<NodeId> ids;
  for (const auto& [id, n] : nodes_) ids.push_back(id);
  return ids;
}

HostApp& System::create_app() {
  apps_.push_back(std::make_unique<HostApp>(*this, static_cast<AppId>(apps_.size())));
  return *apps_.back();
}

RunOutcome System::run(SimTime limit) {
  const RunOutcome out = engine_.run_until(limit);
  for (const auto& a : apps_) a->rethrow_if_failed();
  return out;
}

std::uint64_t System::allocate_host(std::uint64_t len) {
  const std::uint64_t rounded = (len + kLineBytes - 1) / kLineBytes * kLineBytes;
  if (rounded == 0 || rounded > cfg_.host_memory_bytes - host_mem_.size())
    throw Error(Errc::OutOfHostMemory, "host memory exhausted");
  const std::uint64_t off = host_mem_.size();
  host_mem_.resize(off + rounded);
  return off;
}

const AddressSpace* System::address_space(AppId app) const {
  return app < apps_.size() ? &apps_[app]->address_space() : nullptr;
}

std::vector<MccStatsRow> System::stats() const {
  std::vector<MccStatsRow> rows;
  for (const auto& [nid, n] : nodes_) {
    for (MccId id : n->instance_ids()) {
      const MccInstance* m = n->find(id);
      rows.push_back({id, m->app, nid, m->stats, m->status()});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.mcc < b.mcc; });
  return rows;
}

}  // namespace mccsim
