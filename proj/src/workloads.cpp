#include "mccsim/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <set>

namespace mccsim::workloads {

namespace {

constexpr SimTime kReplyTimeout = 1'000'000'000;

std::uint64_t round_line(std::uint64_t n) { return std::max<std::uint64_t>(kLineBytes, (n + kLineBytes - 1) / kLineBytes * kLineBytes); }

std::vector<std::uint8_t> as_bytes(const std::vector<std::uint32_t>& v) {
  std::vector<std::uint8_t> out(v.size() * 4);
  if (!v.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

std::uint8_t attribute_byte(std::uint32_t v, std::uint32_t j) { return static_cast<std::uint8_t>(v * 7 + j * 13 + 1); }

void finish(Report& r, System& sys, RunOutcome out) {
  r.outcome = out;
  r.trace_hash = sys.engine().trace_hash();
  r.events = sys.engine().processed();
  r.stats = sys.stats();
}

// Runs `body` and turns any simulator error into a failed report.
template <typename R, typename F>
R guarded(F&& body) {
  R r;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.oracle_ok = false;
    r.summary = std::string("error: ") + e.what();
  }
  return r;
}

System make_system(const RunOptions& o) {
  if (o.nodes.empty()) throw Error(Errc::BadConfig, "at least one node is required");
  return System(o.sim, o.nodes);
}

// Caches the last far line read so consecutive ids in one line cost one fetch.
struct LineReader {
  HostApp& app;
  std::uint64_t line_va = ~0ull;
  CacheLine line;

  Task<std::uint32_t> u32_at(std::uint64_t va) {
    const std::uint64_t l = line_floor(va);
    if (l != line_va) {
      line = co_await app.far_read_line(l);
      line_va = l;
    }
    std::uint32_t v;
    std::memcpy(&v, line.bytes.data() + (va - l), 4);
    co_return v;
  }
};

}  // namespace

GraphLayout place_graph(HostApp& app, NodeId node, const CsrGraph& g) {
  if (!g.valid()) throw Error(Errc::BadConfig, "graph is not a valid CSR structure");
  const Segment rows = app.map_far(node, round_line((std::uint64_t{g.n} + 1) * 4));
  const Segment cols = app.map_far(node, round_line(g.col_indices.size() * 4) + kLineBytes);
  app.poke(rows.base_va, as_bytes(g.row_offsets));
  if (!g.col_indices.empty()) app.poke(cols.base_va, as_bytes(g.col_indices));
  return {g.n, rows.base_va, cols.base_va};
}

Task<std::vector<std::uint32_t>> host_reach(HostApp& app, GraphLayout g, std::uint32_t src, std::uint32_t hops) {
  LineReader rd{app, ~0ull, {}};
  const SimTime hit = app.config().host_cache_hit_ns;
  std::vector<bool> seen(g.n, false);
  std::vector<std::uint32_t> frontier{src};
  std::vector<std::uint32_t> out;
  seen[src] = true;
  for (std::uint32_t d = 0; d < hops && !frontier.empty(); ++d) {
    std::vector<std::uint32_t> next;
    for (const std::uint32_t v : frontier) {
      const std::uint32_t b = co_await rd.u32_at(g.rows_va + 4ull * v);
      const std::uint32_t e = co_await rd.u32_at(g.rows_va + 4ull * v + 4);
      for (std::uint32_t k = b; k < e; ++k) {
        const std::uint32_t u = co_await rd.u32_at(g.cols_va + 4ull * k);
        co_await app.compute(hit);
        if (u < g.n && !seen[u]) {
          seen[u] = true;
          next.push_back(u);
          out.push_back(u);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  co_return out;
}

Task<std::vector<std::uint32_t>> cp_reach(HostApp& app, MccHandle h, std::uint32_t src, std::uint32_t hops,
                                          bool prefetch, std::vector<CacheLine>* prefetched) {
  CacheLine req;
  req.set_word(0, src);
  req.set_word(1, hops);
  app.data_write(h.data_va + kTraversalRequest, req);
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0;; ++i) {
    const CacheLine l = co_await app.data_wait(h.data_va + (i % kStreamRing) * kLineBytes, kReplyTimeout);
    bool end = false;
    for (std::size_t k = 0; k < kLineBytes / 4; ++k) {
      const std::uint32_t id = l.u32(k);
      if (id == kSentinel) {
        end = true;
        break;
      }
      out.push_back(id);
    }
    if (end) break;
  }
  if (prefetch) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      const std::uint64_t slot = kStreamRing + j % kStreamRing;
      const CacheLine l = co_await app.data_wait(h.data_va + slot * kLineBytes, kReplyTimeout);
      if (prefetched) prefetched->push_back(l);
    }
  }
  std::sort(out.begin(), out.end());
  co_return out;
}

// ---------------------------------------------------------------------------
// Common neighbors

namespace {

struct CnContext {
  System& sys;
  HostApp& app;
  const CommonNeighborsParams& p;
  NodeId node;
  GraphLayout layout;
  std::uint64_t attr_va = 0;
  std::uint64_t attr_dst = 0;
  CommonNeighborsReport& r;
  bool gather_ok = true;
  std::uint64_t prefetch_lines = 0;
};

Task<void> gather_attributes(CnContext& c, MccHandle g, const std::vector<std::uint32_t>& ids) {
  std::vector<std::uint32_t> msg = ids;
  msg.push_back(kSentinel);
  for (std::size_t i = 0; i < msg.size(); i += 16) {
    CacheLine l = CacheLine::filled(0xFF);
    for (std::size_t k = 0; k < 16 && i + k < msg.size(); ++k) l.set_u32(k, msg[i + k]);
    c.app.data_write(g.data_va + kGatherRequest, l);
  }
  const CacheLine done = co_await c.app.data_wait(g.data_va, kReplyTimeout);
  if (done.word(0) != ids.size()) {
    c.gather_ok = false;
    co_return;
  }
  if (ids.empty()) co_return;
  const std::uint64_t rec = c.p.attribute_bytes;
  const auto got = co_await c.app.local_read(c.attr_dst, ids.size() * rec);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::uint32_t j = 0; j < rec; ++j)
      if (got[i * rec + j] != attribute_byte(ids[i], j)) c.gather_ok = false;
}

Task<void> common_neighbors_script(CnContext& c) {
  const SimTime t0 = c.sys.engine().now();
  MccHandle trav{}, gath{};
  if (c.p.use_cp) {
    trav = c.app.mcc_create(c.node);
    co_await c.app.load_program(trav, programs::traversal());
    co_await c.app.start(trav, {c.layout.rows_va, c.layout.cols_va, c.layout.n, c.p.prefetch ? 1u : 0u});
    if (c.p.gather) {
      gath = c.app.mcc_create(c.node);
      co_await c.app.load_program(gath, programs::gather());
      co_await c.app.start(gath, {c.attr_va, c.p.attribute_bytes, c.attr_dst});
    }
  }
  const SimTime t1 = c.sys.engine().now();
  c.r.setup_ns = t1 - t0;
  const SimTime hit = c.sys.config().host_cache_hit_ns;
  for (const auto& [a, b] : c.p.queries) {
    std::vector<std::uint32_t> ra, rb;
    if (c.p.use_cp) {
      std::vector<CacheLine> pre;
      ra = co_await cp_reach(c.app, trav, a, c.p.hops, c.p.prefetch, &pre);
      rb = co_await cp_reach(c.app, trav, b, c.p.hops, c.p.prefetch, &pre);
      c.prefetch_lines += pre.size();
    } else {
      ra = co_await host_reach(c.app, c.layout, a, c.p.hops);
      rb = co_await host_reach(c.app, c.layout, b, c.p.hops);
    }
    // Merge-style intersection on the CPU touches each id once.
    co_await c.app.compute(hit * std::max<std::size_t>(1, ra.size() + rb.size()));
    auto common = intersect_sorted(ra, rb);
    if (c.p.use_cp && c.p.gather) co_await gather_attributes(c, gath, common);
    c.r.results.push_back(std::move(common));
  }
  c.r.phase_ns = c.sys.engine().now() - t1;
  c.r.makespan = c.sys.engine().now();
  // Servers never halt on their own; stopping them lets the run go quiescent.
  if (c.p.use_cp) co_await c.app.stop(trav);
  if (c.p.use_cp && c.p.gather) co_await c.app.stop(gath);
}
}  // namespace

CommonNeighborsReport run_common_neighbors(const CommonNeighborsParams& p, const RunOptions& o) {
  return guarded<CommonNeighborsReport>([&](CommonNeighborsReport& r) {
    const CsrGraph& g = p.graph;
    if (p.hops < 1 || p.hops > 3) throw Error(Errc::BadConfig, "hops must be in [1, 3]");
    if (p.use_cp && g.n > kMaxTraversalVertices)
      throw Error(Errc::BadConfig, fmt::format("traversal program supports at most {} vertices", kMaxTraversalVertices));
    if (p.gather && !p.use_cp) throw Error(Errc::BadConfig, "attribute gather needs the channel-program path");
    if (p.attribute_bytes == 0) throw Error(Errc::BadConfig, "attribute_bytes must be positive");
    for (auto [a, b] : p.queries)
      if (a >= g.n || b >= g.n) throw Error(Errc::OutOfRange, "query source beyond vertex count");

    System sys = make_system(o);
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    const NodeId node = o.nodes.front().id;
    CnContext c{sys, app, p, node, place_graph(app, node, g), 0, 0, r};
    if (p.gather) {
      const std::uint64_t bytes = round_line(std::uint64_t{g.n} * p.attribute_bytes);
      c.attr_va = app.map_far(node, bytes).base_va;
      std::vector<std::uint8_t> attrs(bytes, 0);
      for (std::uint32_t v = 0; v < g.n; ++v)
        for (std::uint32_t j = 0; j < p.attribute_bytes; ++j) attrs[std::size_t{v} * p.attribute_bytes + j] = attribute_byte(v, j);
      app.poke(c.attr_va, attrs);
      c.attr_dst = app.map_host(bytes).base_va;
    }
    app.spawn(common_neighbors_script(c));
    finish(r, sys, sys.run(o.limit));

    bool ok = r.results.size() == p.queries.size() && c.gather_ok;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < r.results.size(); ++i) {
      if (r.results[i] == common_neighbors_oracle(g, p.queries[i].first, p.queries[i].second, p.hops))
        ++matched;
      else
        ok = false;
    }
    r.oracle_ok = ok;
    r.summary = fmt::format("common_neighbors: {}/{} queries match, path={}, setup={} ns, phase={} ns", matched,
                            p.queries.size(), p.use_cp ? (p.prefetch ? "cp+prefetch" : "cp") : "host", r.setup_ns,
                            r.phase_ns);
  });
}

// ---------------------------------------------------------------------------
// Select

const char* to_string(SelectMode m) { return m == SelectMode::Stream ? "stream" : "materialize"; }

namespace {

struct SelectContext {
  System& sys;
  HostApp& app;
  const SelectParams& p;
  NodeId node;
  std::uint64_t table_va;
  std::uint64_t dst_va;
  std::uint64_t rows;
  std::uint64_t constant;
  SelectReport& r;
};

Task<void> select_script(SelectContext& c) {
  const MccHandle h = c.app.mcc_create(c.node);
  co_await c.app.load_program(h, programs::select());
  const SimTime t0 = c.sys.engine().now();
  co_await c.app.start(h, {c.table_va, c.rows, c.constant, c.p.column,
                           static_cast<std::uint64_t>(c.p.mode), c.dst_va});
  if (c.p.mode == SelectMode::Stream) {
    for (std::size_t i = 0;; ++i) {
      const CacheLine l = co_await c.app.data_wait(h.data_va + (i % kStreamRing) * kLineBytes, kReplyTimeout);
      if (l.word(0) == ~0ull) break;
      c.r.row_ids.push_back(l.word(0));
    }
  } else {
    const CacheLine l = co_await c.app.data_wait(h.data_va, kReplyTimeout);
    const std::uint64_t count = l.word(0);
    if (count > 0) {
      const auto rows = co_await c.app.local_read(c.dst_va, count * kLineBytes);
      for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t id;
        std::memcpy(&id, rows.data() + i * kLineBytes, 8);
        c.r.row_ids.push_back(id);
      }
    }
  }
  c.r.phase_ns = c.sys.engine().now() - t0;
  c.r.makespan = c.sys.engine().now();
}

}  // namespace

SelectReport run_select(const SelectParams& p, const RunOptions& o) {
  return guarded<SelectReport>([&](SelectReport& r) {
    if (p.column < 1 || p.column >= kRowWords) throw Error(Errc::BadConfig, "select column must be in [1, 7]");
    if (p.selectivity_pct > 100) throw Error(Errc::BadConfig, "selectivity is a percentage");
    Table t;
    if (p.table) {
      t = *p.table;
    } else {
      std::mt19937_64 rng(p.table_seed);
      t = Table::generate(p.rows, rng);
    }
    if (t.rows.empty()) throw Error(Errc::BadConfig, "select needs at least one row");
    const std::uint64_t rows = t.rows.size();
    const std::uint64_t constant = p.constant ? *p.constant : Table::threshold(p.selectivity_pct);

    System sys = make_system(o);
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    const NodeId node = o.nodes.front().id;
    const std::uint64_t bytes = rows * kLineBytes;
    const std::uint64_t table_va = app.map_far(node, bytes).base_va;
    app.poke(table_va, t.bytes());
    const std::uint64_t dst_va = app.map_host(bytes).base_va;
    SelectContext c{sys, app, p, node, table_va, dst_va, rows, constant, r};
    app.spawn(select_script(c));
    finish(r, sys, sys.run(o.limit));

    const auto expect = select_oracle(t, p.column, constant);
    r.oracle_ok = r.row_ids == expect;
    r.summary = fmt::format("select: mode={} column={} constant={} rows={} got={} expected={} phase={} ns",
                            to_string(p.mode), p.column, constant, rows, r.row_ids.size(), expect.size(), r.phase_ns);
  });
}

// ---------------------------------------------------------------------------
// Bulk

namespace {

struct BulkContext {
  System& sys;
  HostApp& app;
  const BulkParams& p;
  NodeId node;
  std::uint64_t src_va;
  std::uint64_t dst_va;
  std::vector<SimTime> steps;
  std::uint64_t status = 0;
  std::vector<std::uint8_t> readback;
};

Task<void> bulk_script(BulkContext& c) {
  const MccHandle h = c.app.mcc_create(c.node);
  co_await c.app.load_program(h, programs::bulk());
  co_await c.app.start(h, {c.dst_va, c.src_va, c.p.len, static_cast<std::uint64_t>(c.p.kind)});
  c.steps.push_back(c.sys.engine().now());
  for (;;) {
    const auto line = co_await c.app.data_poll(h.data_va);
    c.steps.push_back(c.sys.engine().now());
    if (line) {
      c.status = line->word(0);
      break;
    }
    co_await c.app.compute(c.p.poll_ns);
    c.steps.push_back(c.sys.engine().now());
  }
  if (c.p.verify_with_reads) {
    constexpr std::uint64_t kChunk = 64 * 1024;
    c.readback.reserve(c.p.len);
    for (std::uint64_t off = 0; off < c.p.len; off += kChunk) {
      const auto part = co_await c.app.far_read(c.dst_va + off, std::min(kChunk, c.p.len - off));
      c.readback.insert(c.readback.end(), part.begin(), part.end());
    }
  }
}

}  // namespace

BulkReport run_bulk(const BulkParams& p, const RunOptions& o) {
  return guarded<BulkReport>([&](BulkReport& r) {
    if (p.len == 0 || !is_line_aligned(p.len)) throw Error(Errc::BadLength, "bulk length must be a positive multiple of 64");
    if (p.dst_offset && (p.kind != BulkKind::Copy || !is_line_aligned(*p.dst_offset)))
      throw Error(Errc::BadConfig, "dst_offset applies to line-aligned copies only");

    System sys = make_system(o);
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    const NodeId node = o.nodes.front().id;

    std::uint64_t src_va = 0, dst_va = 0;
    std::vector<std::uint8_t> src_bytes(p.len);
    for (std::uint64_t i = 0; i < p.len; ++i) src_bytes[i] = static_cast<std::uint8_t>((i * 131 + 7) >> 3);
    bool overlap = false;
    if (p.kind == BulkKind::Zero) {
      dst_va = app.map_far(node, p.len).base_va;
      app.poke(dst_va, std::vector<std::uint8_t>(p.len, 0xAB));
    } else if (p.dst_offset) {
      const std::uint64_t span = *p.dst_offset + p.len;
      src_va = app.map_far(node, std::max(span, p.len)).base_va;
      dst_va = src_va + *p.dst_offset;
      app.poke(src_va, std::vector<std::uint8_t>(span, 0x5A));
      app.poke(src_va, src_bytes);
      overlap = *p.dst_offset < p.len;
    } else {
      src_va = app.map_far(node, p.len).base_va;
      dst_va = app.map_far(node, p.len).base_va;
      app.poke(src_va, src_bytes);
    }
    const std::vector<std::uint8_t> dst_before = app.peek(dst_va, p.len);

    BulkContext c{sys, app, p, node, src_va, dst_va, {}, 0, {}};
    app.spawn(bulk_script(c));
    finish(r, sys, sys.run(o.limit));
    r.makespan = sys.engine().now();

    const auto& row = r.stats.at(0);
    r.rejected = c.status == 2;
    r.start_at = row.stats.started_at;
    r.completion_at = row.stats.last_dma_completion;
    r.steps_between = static_cast<std::uint64_t>(std::count_if(
        c.steps.begin(), c.steps.end(), [&](SimTime t) { return t > r.start_at && t < r.completion_at; }));

    const std::vector<std::uint8_t> after = p.verify_with_reads ? c.readback : app.peek(dst_va, p.len);
    std::vector<std::uint8_t> expect;
    if (overlap)
      expect = dst_before;
    else if (p.kind == BulkKind::Zero)
      expect.assign(p.len, 0);
    else
      expect = src_bytes;
    r.bytes_verified = after.size();
    const bool status_ok = overlap ? c.status == 2 : c.status == 1;
    r.oracle_ok = status_ok && after == expect;
    r.summary = fmt::format("bulk: kind={} len={} status={} start={} ns completion={} ns steps_between={} verified={}",
                            p.kind == BulkKind::Zero ? "zero" : "copy", p.len, c.status, r.start_at, r.completion_at,
                            r.steps_between, r.bytes_verified);
  });
}

// ---------------------------------------------------------------------------
// Access statistics

namespace {

struct StatsContext {
  System& sys;
  HostApp& app;
  const AccessStatsParams& p;
  NodeId node;
  std::uint64_t region_va;
  std::uint64_t counters_va;
  const std::vector<TraceEntry>& trace;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> answer;
};

Task<void> stats_script(StatsContext& c) {
  const MccHandle h = c.app.mcc_create(c.node);
  co_await c.app.load_program(h, programs::access_stats());
  co_await c.app.start(h, {c.region_va, c.p.pages, c.counters_va});
  co_await c.app.data_wait(h.data_va, kReplyTimeout);
  for (const TraceEntry& e : c.trace) {
    const std::uint64_t va = c.region_va + std::uint64_t{e.page} * kPageBytes + std::uint64_t{e.line} * kLineBytes;
    if (e.write)
      co_await c.app.far_write_line(va, CacheLine::filled(static_cast<std::uint8_t>(e.page)));
    else
      co_await c.app.far_read_line(va);
  }
  CacheLine q;
  q.set_word(0, c.p.top_k);
  c.app.data_write(h.data_va + kStatsQuery, q);
  const CacheLine a = co_await c.app.data_wait(h.data_va + kStatsAnswer, kReplyTimeout);
  const std::size_t k = std::min<std::size_t>({c.p.top_k, 8, c.p.pages});
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t w = a.word(i);
    c.answer.emplace_back(static_cast<std::uint32_t>(w & 0xFFFF'FFFF), w >> 32);
  }
  co_await c.app.stop(h);
}

}  // namespace

AccessStatsReport run_access_stats(const AccessStatsParams& p, const RunOptions& o) {
  return guarded<AccessStatsReport>([&](AccessStatsReport& r) {
    if (p.pages == 0) throw Error(Errc::BadConfig, "access_stats needs at least one page");
    std::vector<TraceEntry> trace;
    if (p.trace) {
      trace = *p.trace;
    } else {
      std::mt19937_64 rng(p.trace_seed);
      trace = make_trace(p.pages, p.trace_len, rng);
    }
    for (const auto& e : trace)
      if (e.page >= p.pages || e.line >= kPageBytes / kLineBytes)
        throw Error(Errc::OutOfRange, "trace entry outside the observed region");

    System sys = make_system(o);
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    const NodeId node = o.nodes.front().id;
    const std::uint64_t region = app.map_far(node, std::uint64_t{p.pages} * kPageBytes).base_va;
    const std::uint64_t counters = app.map_far(node, round_line(std::uint64_t{p.pages} * 8)).base_va;
    StatsContext c{sys, app, p, node, region, counters, trace, {}};
    app.spawn(stats_script(c));
    finish(r, sys, sys.run(o.limit));
    r.makespan = sys.engine().now();

    const auto raw = app.peek(counters, std::uint64_t{p.pages} * 8);
    r.counters.resize(p.pages);
    std::memcpy(r.counters.data(), raw.data(), raw.size());
    r.expected = page_counts(trace, p.pages);
    r.top_k = c.answer;
    const auto want = top_k_oracle(r.expected, std::min<std::size_t>({p.top_k, 8, p.pages}));
    r.oracle_ok = r.counters == r.expected && r.top_k == want;
    r.summary = fmt::format("access_stats: pages={} accesses={} counters {} top-{} {}", p.pages, trace.size(),
                            r.counters == r.expected ? "match" : "MISMATCH", want.size(),
                            r.top_k == want ? "match" : "MISMATCH");
  });
}

// ---------------------------------------------------------------------------
// Scheduling

SchedReport run_sched(const SchedParams& p, const RunOptions& o) {
  return guarded<SchedReport>([&](SchedReport& r) {
    if (p.weights.empty()) throw Error(Errc::BadConfig, "sched needs at least one MCC");
    NodeConfig nc = o.nodes.empty() ? NodeConfig{} : o.nodes.front();
    nc.processors = p.processors;
    nc.policy = p.policy;
    System sys(o.sim, {nc});
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    Node& node = sys.node(nc.id);
    for (std::uint32_t w : p.weights) {
      const MccHandle h = app.mcc_create(nc.id, w);
      node.install(h.id, programs::busy_loop());
      node.start(h.id);
    }
    finish(r, sys, sys.run(p.measure_ns));
    r.makespan = sys.engine().now();

    for (const auto& row : r.stats) r.instructions.push_back(row.stats.instructions);
    r.total = std::accumulate(r.instructions.begin(), r.instructions.end(), std::uint64_t{0});
    const double wsum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
    bool ok = r.total >= 1'000'000;
    std::string detail;
    for (std::size_t i = 0; i < r.instructions.size(); ++i) {
      const double share = r.total ? static_cast<double>(r.instructions[i]) / static_cast<double>(r.total) : 0.0;
      r.shares.push_back(share);
      if (p.policy == SchedPolicy::RoundRobin) {
        ok = ok && std::abs(share - 1.0 / static_cast<double>(p.weights.size())) <= 0.02;
      } else {
        const double want = p.weights[i] / wsum;
        ok = ok && std::abs(share - want) <= 0.05 * want;
      }
      detail += fmt::format(" {:.4f}", share);
    }
    r.oracle_ok = ok;
    r.summary = fmt::format("sched: policy={} instructions={} shares:{}", to_string(p.policy), r.total, detail);
  });
}

// ---------------------------------------------------------------------------
// Stress

namespace {

const char* const kYieldLoop = R"(
.events NONE
spin:
    YIELD
    BR spin
)";

const char* const kHostWaiter = R"(
.events HOSTWRITE
    WAIT HOSTWRITE
    HALT
)";

const char* const kCountdownFault = R"(
.params 1
.events NONE
    PARAM 0, r1
loop:
    SUB r1, r1, 1
    BNE r1, r0, loop
    DIV r2, r2, r0
)";

}  // namespace

StressReport run_stress(const StressParams& p, const RunOptions& o) {
  return guarded<StressReport>([&](StressReport& r) {
    NodeConfig nc = o.nodes.empty() ? NodeConfig{} : o.nodes.front();
    nc.processors = p.processors;
    nc.policy = p.policy;
    nc.dram_bytes = 1 << 20;
    System sys(o.sim, {nc});
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    Node& node = sys.node(nc.id);

    const auto yield = assemble_or_throw(kYieldLoop);
    const auto waiter = assemble_or_throw(kHostWaiter);
    const auto faulter = assemble_or_throw(kCountdownFault);
    std::mt19937_64 rng(p.seed);
    std::uniform_int_distribution<int> pick(0, 99);
    std::uniform_int_distribution<std::uint64_t> countdown(1, 1000);
    std::set<MccId> runnable;
    std::uint32_t faulters = 0;
    for (std::uint32_t i = 0; i < p.instances; ++i) {
      const std::uint32_t weight = p.policy == SchedPolicy::Wfq ? 1 + static_cast<std::uint32_t>(pick(rng) % 4) : 1;
      const MccHandle h = app.mcc_create(nc.id, weight);
      const int kind = pick(rng);
      if (kind < 40) {
        node.install(h.id, programs::busy_loop());
        node.start(h.id);
      } else if (kind < 70) {
        node.install(h.id, yield);
        node.start(h.id);
      } else if (kind < 85) {
        node.install(h.id, waiter);
        node.start(h.id);
        continue;
      } else {
        const std::uint64_t n = countdown(rng);
        node.install(h.id, faulter);
        node.start(h.id, std::span<const std::uint64_t>(&n, 1));
        ++faulters;
      }
      runnable.insert(h.id);
    }
    finish(r, sys, sys.run(p.run_ns));
    r.makespan = sys.engine().now();
    r.violations = node.starvation_violations();
    r.max_wait_quanta = node.max_wait_quanta();
    r.quanta = node.quanta();
    for (const auto& row : r.stats) {
      if (runnable.count(row.mcc) && row.stats.instructions == 0) ++r.never_ran;
      if (row.status == MccStatus::Faulted) ++r.faulted;
    }
    r.oracle_ok = r.violations == 0 && r.never_ran == 0 && r.faulted == faulters;
    r.summary = fmt::format("stress: instances={} quanta={} violations={} max_wait={} never_ran={} faulted={}/{}",
                            p.instances, r.quanta, r.violations, r.max_wait_quanta, r.never_ran, r.faulted, faulters);
  });
}

// ---------------------------------------------------------------------------
// Isolation fuzzing

ChannelProgramImage random_image(std::mt19937_64& rng, const std::vector<std::uint64_t>& interesting) {
  static constexpr Opcode kMemoryOps[] = {Opcode::LDA,  Opcode::LDW,       Opcode::STA,       Opcode::STW,
                                          Opcode::DMA,  Opcode::DMAZ,      Opcode::WAITT,     Opcode::SEND_LINE,
                                          Opcode::REPLY_LINE, Opcode::RECV_LINE, Opcode::STAT_NEXT};
  static constexpr Opcode kOtherOps[] = {
      Opcode::NOP, Opcode::HALT, Opcode::YIELD, Opcode::ADD, Opcode::SUB,  Opcode::MUL,      Opcode::DIV,
      Opcode::REM, Opcode::AND,  Opcode::OR,    Opcode::XOR, Opcode::SHL,  Opcode::SHR,      Opcode::CMP,
      Opcode::BR,  Opcode::BEQ,  Opcode::BNE,   Opcode::BLT, Opcode::BGE,  Opcode::WAIT,     Opcode::STAT_SUB,
      Opcode::PARAM,
  };
  auto u = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };
  // Most operands come from a few registers so loaded addresses reach memory ops.
  auto reg = [&] { return static_cast<std::uint8_t>(u(0, 9) < 9 ? u(1, 2) : u(0, 15)); };
  auto near = [&] {
    if (interesting.empty()) return std::uint64_t{0};
    const std::uint64_t below = u(0, 4) == 0 ? 128 : 0;
    return interesting[u(0, interesting.size() - 1)] + u(0, 2) * 64 - below;
  };

  ChannelProgramImage img;
  const std::size_t len = u(1, 48);
  img.param_count = static_cast<std::uint8_t>(u(0, kMaxParams));
  img.declared_events = static_cast<std::uint16_t>(u(0, kKnownEventBits));
  img.stream_credits = static_cast<std::uint8_t>(u(0, 16));
  img.entry_pc = u(0, 9) < 7 ? 0 : static_cast<std::uint32_t>(u(0, len - 1));
  for (std::size_t i = 0; i < len; ++i) {
    // The first few words lean towards loading addresses into registers.
    const auto roll = i < 3 && u(0, 9) < 8 ? 3 : u(0, 99);
    if (roll < 3) {
      img.code.push_back(rng());
      continue;
    }
    Instruction ins;
    if (roll < 30) {
      ins.op = Opcode::MOV;
    } else if (roll < 70) {
      ins.op = kMemoryOps[u(0, std::size(kMemoryOps) - 1)];
    } else {
      ins.op = kOtherOps[u(0, std::size(kOtherOps) - 1)];
    }
    ins.rd = i < 2 ? static_cast<std::uint8_t>(i + 1) : reg();
    ins.ra = reg();
    ins.rb = reg();
    ins.flags = static_cast<std::uint8_t>(u(0, 3));
    switch (u(0, 3)) {
      case 0:
      case 1: ins.imm = static_cast<std::int32_t>(near()); break;
      case 2: ins.imm = static_cast<std::int32_t>(u(0, 4096)); break;
      default: ins.imm = static_cast<std::int32_t>(rng()); break;
    }
    if (ins.op == Opcode::MOV) {
      ins.flags |= kFlagImm;
      if (u(0, 3) != 0) ins.imm = static_cast<std::int32_t>(near());
    }
    if ((ins.op == Opcode::SEND_LINE || ins.op == Opcode::REPLY_LINE || ins.op == Opcode::RECV_LINE) && u(0, 3) != 0)
      ins.imm = static_cast<std::int32_t>(u(0, kDataAreaBytes / kLineBytes) * kLineBytes);
    if (ins.op == Opcode::WAITT || ins.op == Opcode::LDA || ins.op == Opcode::LDW || ins.op == Opcode::STA ||
        ins.op == Opcode::STW || ins.op == Opcode::DMA || ins.op == Opcode::DMAZ)
      ins.imm = static_cast<std::int32_t>(u(0, 3));  // tag
    if (is_branch(ins.op)) ins.imm = static_cast<std::int32_t>(u(0, len + 1));
    // Closing some programs with a jump back keeps them issuing accesses.
    if (i + 1 == len && len > 1 && u(0, 1) == 0) ins = Instruction{Opcode::BR, 0, 0, 0, kFlagImm, 0};
    img.code.push_back(ins.encode());
  }
  return img;
}

namespace {

// Checks one logged access against the owning app's master table.
std::optional<std::string> check_access(const System& sys, const AccessRecord& rec) {
  const AddressSpace* as = sys.address_space(rec.app);
  if (!as) return fmt::format("access by MCC {} of unknown app {}", rec.mcc, rec.app);
  const auto tr = as->translate_range(rec.va, rec.len, rec.write ? Access::Write : Access::Read,
                                      Requester::mcc_on(rec.mcc, rec.node));
  const auto describe = [&] {
    return fmt::format("MCC {} app {} {} va={:#x} len={}", rec.mcc, rec.app, rec.write ? "write" : "read", rec.va,
                       rec.len);
  };
  if (!tr) return describe() + " is not permitted by the translate oracle";
  const Translation& t = *tr.ok;
  if (const auto* f = std::get_if<FarDirect>(&t.backing)) {
    if (rec.where != AccessRecord::Where::NodeDram || rec.node != f->node || rec.phys != f->offset + t.offset)
      return describe() + " landed at the wrong far-memory location";
  } else if (const auto* h = std::get_if<HostLocal>(&t.backing)) {
    if (rec.where != AccessRecord::Where::HostMemory || rec.phys != h->offset + t.offset)
      return describe() + " landed at the wrong host location";
  } else {
    return describe() + " resolved to an MCC area";
  }
  return std::nullopt;
}

}  // namespace

FuzzReport run_fuzz(const FuzzParams& p, const RunOptions& o) {
  return guarded<FuzzReport>([&](FuzzReport& r) {
    std::mt19937_64 rng(p.seed);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    constexpr std::uint64_t kVictimBytes = 16 * 1024;
    std::vector<std::uint8_t> pattern(kVictimBytes);
    for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = static_cast<std::uint8_t>(i * 29 + 3);

    for (std::size_t run = 0; run < p.programs; ++run) {
      NodeConfig nc = o.nodes.empty() ? NodeConfig{} : o.nodes.front();
      nc.dram_bytes = 1 << 20;
      SimConfig sim = o.sim;
      sim.seed = rng();
      sim.host_memory_bytes = 1 << 20;
      System sys(sim, {nc});
      if (run == 0) sys.engine().set_trace(o.trace);
      Node& node = sys.node(nc.id);
      node.set_access_log(true);

      HostApp& victim = sys.create_app();
      const std::uint64_t vsrc = victim.map_far(nc.id, kVictimBytes).base_va;
      const std::uint64_t vdst = victim.map_far(nc.id, kVictimBytes).base_va;
      victim.poke(vsrc, pattern);
      const MccHandle vh = victim.mcc_create(nc.id);

      HostApp& fuzz = sys.create_app();
      const Segment rw = fuzz.map_far(nc.id, 8192);
      const Segment ro = fuzz.map_far(nc.id, 4096, kRead);
      const Segment host = fuzz.map_host(4096);
      const MccHandle fh = fuzz.mcc_create(nc.id);

      // Boundaries of every region class, with the fuzzed app's own segments
      // listed several times so that many programs get past their first access.
      std::vector<std::uint64_t> interesting{
          rw.end_va(),  host.end_va(),  vsrc,          vdst,          vh.control_va, vh.data_va,
          fh.control_va, fh.data_va,    kScratchBase,  kScratchBase + kScratchBytes - 64,
          kHostLocalBase, 0,            4096,          kMccRegionBase,
      };
      for (int rep = 0; rep < 8; ++rep)
        interesting.insert(interesting.end(), {rw.base_va, rw.base_va + 4096, rw.end_va() - 64, ro.base_va,
                                               ro.end_va() - 8, host.base_va});
      const auto img = std::make_shared<const ChannelProgramImage>(random_image(rng, interesting));
      std::array<std::uint64_t, kMaxParams> params{};
      for (auto& v : params) v = interesting[rng() % interesting.size()] + (rng() % 4) * 64;

      node.install(vh.id, programs::bulk());
      const std::array<std::uint64_t, 4> vparams{vdst, vsrc, kVictimBytes, 1};
      node.start(vh.id, vparams);
      node.install(fh.id, img);
      node.start(fh.id, std::span<const std::uint64_t>(params.data(), img->param_count));

      const RunOutcome out = sys.run(p.run_ns);
      hash = (hash ^ sys.engine().trace_hash()) * 0x100000001b3ull;
      r.events += sys.engine().processed();
      ++r.runs;

      std::size_t fuzz_here = 0;
      for (const AccessRecord& rec : node.access_log()) {
        ++r.accesses_checked;
        if (rec.app == fuzz.id()) ++fuzz_here;
        if (auto v = check_access(sys, rec)) {
          ++r.violations;
          if (r.first_violation.empty()) r.first_violation = fmt::format("run {}: {}", run, *v);
        }
        if (rec.app == fuzz.id() && rec.mcc != fh.id) {
          ++r.violations;
          if (r.first_violation.empty()) r.first_violation = fmt::format("run {}: access attributed to wrong MCC", run);
        }
      }
      r.fuzz_accesses += fuzz_here;
      if (fuzz_here > 0) ++r.runs_with_access;
      const MccInstance* vm = node.find(vh.id);
      if (victim.peek(vdst, kVictimBytes) != pattern || !vm || vm->status() != MccStatus::Halted) ++r.victim_failures;
      const MccInstance* fm = node.find(fh.id);
      if (fm && fm->status() == MccStatus::Faulted) ++r.fuzz_faulted;
      if (run + 1 == p.programs) {
        r.outcome = out;
        r.stats = sys.stats();
      }
    }
    r.trace_hash = hash;
    r.oracle_ok = r.violations == 0 && r.victim_failures == 0;
    r.summary = fmt::format(
        "fuzz: runs={} accesses_checked={} fuzz_accesses={} runs_with_access={} violations={} victim_failures={} "
        "fuzz_faulted={}{}",
        r.runs, r.accesses_checked, r.fuzz_accesses, r.runs_with_access, r.violations, r.victim_failures, r.fuzz_faulted,
                            r.first_violation.empty() ? "" : " first: " + r.first_violation);
  });
}

// ---------------------------------------------------------------------------
// Arbitrary program

namespace {

Task<void> program_script(HostApp& app, MccHandle h, std::shared_ptr<const ChannelProgramImage> img,
                          std::vector<std::uint64_t> params) {
  co_await app.load_program(h, std::move(img));
  co_await app.start(h, std::move(params));
}

}  // namespace

Report run_program(const ProgramParams& p, const RunOptions& o) {
  return guarded<Report>([&](Report& r) {
    if (!p.image) throw Error(Errc::BadImage, "no program image");
    if (p.params.size() > kMaxParams) throw Error(Errc::BadConfig, "at most 8 parameters");
    System sys = make_system(o);
    sys.engine().set_trace(o.trace);
    HostApp& app = sys.create_app();
    const MccHandle h = app.mcc_create(o.nodes.front().id);
    app.spawn(program_script(app, h, p.image, p.params));
    finish(r, sys, sys.run(o.limit));
    r.makespan = sys.engine().now();
    const auto& row = r.stats.at(0);
    r.oracle_ok = r.outcome != RunOutcome::Deadlock && row.status != MccStatus::Faulted;
    r.summary = fmt::format("program: outcome={} status={} instructions={}", to_string(r.outcome),
                            to_string(row.status), row.stats.instructions);
  });
}

}  // namespace mccsim::workloads
