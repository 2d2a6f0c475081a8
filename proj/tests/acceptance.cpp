// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <fmt/format.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <set>

#include "mccsim/scenario.hpp"

using namespace mccsim;
using namespace mccsim::workloads;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, std::string what) {
    if (!cond) ok = false;
    if (!cond || notes.size() < 12) notes.push_back((cond ? "ok   " : "FAIL ") + std::move(what));
  }
};

// ---------------------------------------------------------------------------
// Oracles kept separate from the library's own checkers.

std::set<std::uint32_t> bfs(const CsrGraph& g, std::uint32_t src, std::uint32_t hops) {
  std::vector<int> dist(g.n, -1);
  std::deque<std::uint32_t> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    const std::uint32_t v = q.front();
    q.pop_front();
    if (dist[v] == static_cast<int>(hops)) continue;
    for (std::uint32_t e = g.row_offsets[v]; e < g.row_offsets[v + 1]; ++e) {
      const std::uint32_t w = g.col_indices[e];
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push_back(w);
      }
    }
  }
  std::set<std::uint32_t> out;
  for (std::uint32_t v = 0; v < g.n; ++v)
    if (dist[v] > 0) out.insert(v);
  return out;
}

std::vector<std::uint32_t> brute_common(const CsrGraph& g, std::uint32_t a, std::uint32_t b, std::uint32_t hops) {
  const auto ra = bfs(g, a, hops);
  const auto rb = bfs(g, b, hops);
  std::vector<std::uint32_t> out;
  std::set_intersection(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(out));
  return out;
}

// ---------------------------------------------------------------------------

SimTime timed_far_read(const SimConfig& cfg) {
  System sys(cfg);
  HostApp& app = sys.create_app();
  const Segment seg = app.map_far(0, 4096);
  SimTime t0 = 0, t1 = 0;
  app.spawn([](Engine& e, HostApp& a, std::uint64_t va, SimTime& start, SimTime& end) -> Task<void> {
    start = e.now();
    co_await a.far_read_line(va);
    end = e.now();
  }(sys.engine(), app, seg.base_va, t0, t1));
  sys.run();
  return t1 - t0;
}

Check ac1_latency() {
  Check c;
  SimConfig cfg;
  cfg.far_base_latency_ns = 250;
  cfg.hops = 0;
  // Request out, DRAM access, response back; only the response carries 64 bytes.
  const double serialization = 64.0 / (static_cast<double>(cfg.far_bandwidth_bytes_per_us) / 1000.0);
  const double expected = 2.0 * 250 + static_cast<double>(cfg.node_dram_latency_ns) + serialization;
  const SimTime base = timed_far_read(cfg);
  c.expect(std::abs(static_cast<double>(base) - 581.0) <= 1.0, fmt::format("hops=0 read took {} ns, want 581+-1", base));
  c.expect(std::abs(static_cast<double>(base) - expected) <= 1.0,
           fmt::format("hops=0 read {} ns vs model {:.2f} ns", base, expected));
  cfg.hops = 2;
  cfg.per_hop_latency_ns = 300;
  const SimTime hopped = timed_far_read(cfg);
  c.expect(hopped == base + 1200, fmt::format("hops=2 read took {} ns, want {} ns", hopped, base + 1200));
  return c;
}

Check ac2_correctness() {
  Check c;
  std::mt19937_64 rng(20240);
  int matched = 0;
  for (int i = 0; i < 100; ++i) {
    CommonNeighborsParams p;
    p.graph = CsrGraph::random_bounded(100, 8, rng);
    p.hops = 1 + static_cast<std::uint32_t>(i % 3);
    std::uniform_int_distribution<std::uint32_t> pick(0, 99);
    for (int q = 0; q < 4; ++q) p.queries.emplace_back(pick(rng), pick(rng));
    const auto r = run_common_neighbors(p);
    bool same = r.results.size() == p.queries.size();
    for (std::size_t q = 0; same && q < p.queries.size(); ++q)
      same = r.results[q] == brute_common(p.graph, p.queries[q].first, p.queries[q].second, p.hops);
    if (same && r.oracle_ok) ++matched;
  }
  c.expect(matched == 100, fmt::format("common_neighbors matched {}/100 graphs", matched));

  for (auto mode : {SelectMode::Stream, SelectMode::Materialize}) {
    for (unsigned pct : {0u, 1u, 50u, 90u, 100u}) {
      SelectParams p;
      p.rows = 1000;
      p.selectivity_pct = pct;
      p.column = 3;
      p.mode = mode;
      p.table_seed = 77 + pct;
      std::mt19937_64 trng(p.table_seed);
      const Table t = Table::generate(p.rows, trng);
      p.table = t;
      p.constant = pct * 100ull;
      std::vector<std::uint64_t> scan;
      for (const auto& row : t.rows)
        if (row[3] < *p.constant) scan.push_back(row[0]);
      auto r = run_select(p);
      auto got = r.row_ids;
      std::sort(got.begin(), got.end());
      std::sort(scan.begin(), scan.end());
      c.expect(got == scan && scan.size() == pct * 10,
               fmt::format("select {} {}%: {} rows, scan {} rows", to_string(mode), pct, got.size(), scan.size()));
    }
  }

  AccessStatsParams ap;
  std::mt19937_64 trng(99);
  std::vector<TraceEntry> trace;
  std::uniform_int_distribution<std::uint32_t> page(0, ap.pages - 1), line(0, 63);
  for (int i = 0; i < 2000; ++i) {
    // Skew toward low pages so the top-k is not a tie fest.
    const std::uint32_t pg = std::min(page(trng), page(trng));
    trace.push_back({pg, line(trng), (i % 3) == 0});
  }
  ap.trace = trace;
  std::vector<std::uint64_t> counts(ap.pages, 0);
  for (const auto& e : trace) ++counts[e.page];
  const auto r = run_access_stats(ap);
  c.expect(r.counters == counts, "access_stats counters equal the driver trace");
  c.expect(r.oracle_ok, "access_stats top-k " + r.summary);
  return c;
}

Check ac3_offload() {
  Check c;
  std::mt19937_64 rng(2024);
  CommonNeighborsParams p;
  p.graph = CsrGraph::random_bounded(10000, 8, rng);
  std::uniform_int_distribution<std::uint32_t> pick(0, p.graph.n - 1);
  for (int q = 0; q < 32; ++q) p.queries.emplace_back(pick(rng), pick(rng));
  p.hops = 2;
  RunOptions o;
  o.nodes[0].dram_bytes = 64ull << 20;

  double previous = 0;
  for (SimTime base = 150; base <= 400; base += 50) {
    o.sim.far_base_latency_ns = base;
    p.use_cp = true;
    const auto cp = run_common_neighbors(p, o);
    p.use_cp = false;
    const auto host = run_common_neighbors(p, o);
    const bool ok = cp.oracle_ok && host.oracle_ok;
    const double ratio = static_cast<double>(host.makespan) / static_cast<double>(cp.makespan);
    c.expect(ok, fmt::format("far_base={} both paths correct", base));
    c.expect(ratio > previous, fmt::format("far_base={} host {} ns / cp {} ns = {:.3f}", base, host.makespan,
                                           cp.makespan, ratio));
    if (base == SimConfig{}.far_base_latency_ns) c.expect(ratio >= 2.0, fmt::format("default ratio {:.3f} >= 2", ratio));
    previous = ratio;
  }
  return c;
}

Check ac4_fuzz() {
  Check c;
  FuzzParams p;
  p.programs = 10000;
  p.seed = 4;
  const auto r = run_fuzz(p);
  c.expect(r.runs == 10000, fmt::format("{} programs ran", r.runs));
  c.expect(r.violations == 0, fmt::format("{} accesses outside the fuzzed app ({} checked, {} by fuzz programs) {}",
                                          r.violations, r.accesses_checked, r.fuzz_accesses, r.first_violation));
  c.expect(r.victim_failures == 0, fmt::format("{} victim failures", r.victim_failures));
  c.expect(r.fuzz_accesses > 0, fmt::format("{} runs issued at least one access", r.runs_with_access));
  return c;
}

Check ac5_sched() {
  Check c;
  SchedParams rr;
  rr.weights.assign(8, 1);
  const auto a = run_sched(rr);
  std::uint64_t total = 0;
  for (auto n : a.instructions) total += n;
  c.expect(total >= 1'000'000, fmt::format("RR executed {} instructions", total));
  for (std::size_t i = 0; i < a.instructions.size(); ++i) {
    const double share = static_cast<double>(a.instructions[i]) / static_cast<double>(total);
    c.expect(std::abs(share - 0.125) <= 0.02, fmt::format("RR mcc {} share {:.4f}", i, share));
  }

  SchedParams wfq;
  wfq.weights = {1, 2, 4};
  wfq.policy = SchedPolicy::Wfq;
  const auto w = run_sched(wfq);
  total = 0;
  for (auto n : w.instructions) total += n;
  c.expect(total >= 1'000'000, fmt::format("WFQ executed {} instructions", total));
  for (std::size_t i = 0; i < 3; ++i) {
    const double want = static_cast<double>(wfq.weights[i]) / 7.0;
    const double share = static_cast<double>(w.instructions.at(i)) / static_cast<double>(total);
    c.expect(std::abs(share - want) <= 0.05 * want, fmt::format("WFQ weight {} share {:.4f} want {:.4f}",
                                                                wfq.weights[i], share, want));
  }

  StressParams sp;
  sp.instances = 1000;
  const auto s = run_stress(sp);
  c.expect(s.violations == 0 && s.never_ran == 0,
           fmt::format("stress: {} bound violations, {} starved, max wait {} quanta", s.violations, s.never_ran,
                       s.max_wait_quanta));
  return c;
}

Check ac6_async() {
  Check c;
  BulkParams p;
  p.kind = BulkKind::Zero;
  p.len = 4ull << 20;
  const auto r = run_bulk(p);
  c.expect(r.steps_between >= 1, fmt::format("{} driver steps between START and completion", r.steps_between));
  c.expect(r.oracle_ok && r.bytes_verified == p.len,
           fmt::format("read back {} of {} bytes as zero", r.bytes_verified, p.len));
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MCCSIM_CLI) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Check ac7_deadlock() {
  Check c;
  const auto image = programs::wait_none();
  c.expect(check_safety(*image).has(FindingKind::WaitNeverSatisfied), "WAIT NONE flagged statically");

  System sys;
  HostApp& app = sys.create_app();
  const MccHandle h = app.mcc_create(0);
  app.spawn([](HostApp& a, MccHandle m, std::shared_ptr<const ChannelProgramImage> img) -> Task<void> {
    co_await a.load_program(m, img);
    co_await a.start(m, {});
  }(app, h, image));
  Engine& e = sys.engine();
  const MccInstance* inst = nullptr;
  SimTime t_block = 0;
  for (SimTime t = 0; t < 1'000'000; ++t) {
    e.run_until(t);
    inst = sys.node(0).find(h.id);
    if (inst && inst->status() == MccStatus::Waiting) {
      t_block = e.now();
      break;
    }
  }
  c.expect(inst && inst->status() == MccStatus::Waiting, fmt::format("MCC blocked at {} ns", t_block));
  const RunOutcome out = e.run_until(kForever);
  const auto& suspects = e.deadlock_suspects();
  c.expect(out == RunOutcome::Deadlock, std::string("run_until returned ") + to_string(out));
  c.expect(e.now() <= t_block + e.watchdog_ns(),
           fmt::format("reported at {} ns, block {} + watchdog {}", e.now(), t_block, e.watchdog_ns()));
  c.expect(std::find(suspects.begin(), suspects.end(), h.id) != suspects.end(), "MCC listed as suspect");

  const fs::path out_dir = fs::temp_directory_path() / "mccsim-acceptance-wait-none";
  const int rc = run_cli(fmt::format("run {}/wait_none.scenario --out {}", MCCSIM_SCENARIOS, out_dir.string()));
  c.expect(rc == 4, fmt::format("CLI exit code {}", rc));
  fs::remove_all(out_dir);
  return c;
}

Check ac8_determinism() {
  Check c;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(MCCSIM_SCENARIOS))
    if (entry.path().extension() == ".scenario") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::set<std::string> kinds;
  for (const auto& f : files) {
    const auto s = scenario::load(f);
    kinds.insert(scenario::kind_name(s.workload));
    const auto a = scenario::run(s);
    const auto b = scenario::run(scenario::load(f));
    c.expect(a.trace_hash == b.trace_hash,
             fmt::format("{}: 0x{:016x} vs 0x{:016x}", f.filename().string(), a.trace_hash, b.trace_hash));
  }
  c.expect(kinds.size() == std::variant_size_v<scenario::Workload>,
           fmt::format("{} workload kinds covered", kinds.size()));

  // The CLI hash must not depend on where the output goes or on tracing.
  const auto tmp = fs::temp_directory_path() / "mccsim-acceptance-det";
  const auto hash_of = [&](const std::string& extra) {
    const std::string cmd = fmt::format("{} run {}/select.scenario --seed 17 --out {} {}", MCCSIM_CLI,
                                        MCCSIM_SCENARIOS, tmp.string(), extra);
    std::string text;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char buf[256];
      while (fgets(buf, sizeof buf, pipe)) text += buf;
      pclose(pipe);
    }
    const auto at = text.find("trace_hash=");
    return at == std::string::npos ? std::string("missing") : text.substr(at, 29);
  };
  const auto h1 = hash_of("");
  const auto h2 = hash_of("--trace");
  c.expect(h1 == h2 && h1 != "missing", "CLI rerun " + h1 + " / " + h2);
  fs::remove_all(tmp);
  return c;
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Check()> body;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"AC1 latency model", 1, ac1_latency},
      {"AC2 workload correctness", 30, ac2_correctness},
      {"AC3 offload benefit", 60, ac3_offload},
      {"AC4 isolation fuzzing", 300, ac4_fuzz},
      {"AC5 scheduling", 60, ac5_sched},
      {"AC6 asynchrony", 60, ac6_async},
      {"AC7 deadlock handling", 60, ac7_deadlock},
      {"AC8 determinism", 300, ac8_determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = cr.body();
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < cr.budget_s, fmt::format("wall time {:.2f} s under {:.0f} s", secs, cr.budget_s));
    fmt::print("[{}] {} ({:.2f} s)\n", c.ok ? "PASS" : "FAIL", cr.name, secs);
    for (const auto& n : c.notes) fmt::print("       {}\n", n);
    if (!c.ok) ++failed;
  }
  fmt::print("{} of {} criteria passed\n", std::size(criteria) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
