#include "mccsim/scenario.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

#include "mccsim/cp_lang.hpp"

namespace mccsim::scenario {

using nlohmann::json;
namespace fs = std::filesystem;
namespace wl = workloads;

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ScenarioError(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ScenarioError(where_ + ": missing required key '" + key + "'");
    return convert<T>(j_.at(key), key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ScenarioError(where_ + ": unknown key '" + key + "'");
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ScenarioError(path(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          const auto u = v.get<std::uint64_t>();
          if (u > std::numeric_limits<T>::max()) throw ScenarioError(path(key) + ": value out of range");
          return static_cast<T>(u);
        }
        if (v.get<std::int64_t>() < 0) throw ScenarioError(path(key) + ": must not be negative");
      }
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ScenarioError(path(key) + ": wrong value type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

SchedPolicy parse_policy(const std::string& s, const std::string& where) {
  if (s == "rr" || s == "round_robin") return SchedPolicy::RoundRobin;
  if (s == "wfq") return SchedPolicy::Wfq;
  throw ScenarioError(where + ": policy must be 'rr' or 'wfq'");
}

SimConfig parse_sim(const json& j, SimConfig c) {
  Fields f(j, "config");
  c.far_base_latency_ns = f.get("far_base_latency_ns", c.far_base_latency_ns);
  c.per_hop_latency_ns = f.get("per_hop_latency_ns", c.per_hop_latency_ns);
  c.hops = f.get("hops", c.hops);
  c.far_bandwidth_bytes_per_us = f.get("far_bandwidth_bytes_per_us", c.far_bandwidth_bytes_per_us);
  c.node_dram_latency_ns = f.get("node_dram_latency_ns", c.node_dram_latency_ns);
  c.host_dram_latency_ns = f.get("host_dram_latency_ns", c.host_dram_latency_ns);
  c.dispatch_step_budget = f.get("dispatch_step_budget", c.dispatch_step_budget);
  c.watchdog_ns = f.get("watchdog_ns", c.watchdog_ns);
  c.strict_affinity = f.get("strict_affinity", c.strict_affinity);
  c.wfq_quantum = f.get("wfq_quantum", c.wfq_quantum);
  c.host_cache_hit_ns = f.get("host_cache_hit_ns", c.host_cache_hit_ns);
  c.host_memory_bytes = f.get("host_memory_bytes", c.host_memory_bytes);
  f.done();
  return c;
}

NodeConfig parse_node(const json& j, std::size_t index) {
  Fields f(j, fmt::format("nodes[{}]", index));
  NodeConfig n;
  n.id = f.get("id", static_cast<NodeId>(index));
  n.dram_bytes = f.get("dram_bytes", n.dram_bytes);
  n.processors = f.get("processors", n.processors);
  if (f.has("policy")) n.policy = parse_policy(f.require<std::string>("policy"), f.path("policy"));
  n.dram_latency_ns = f.get("dram_latency_ns", n.dram_latency_ns);
  f.done();
  return n;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ScenarioError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_binary(const fs::path& p) {
  const std::string s = read_text(p);
  return {s.begin(), s.end()};
}

wl::CsrGraph parse_graph(Fields& w, std::uint64_t seed, const fs::path& base) {
  Fields g(w.raw("graph"), w.path("graph"));
  wl::CsrGraph graph;
  if (g.has("file")) {
    std::istringstream in(read_text(resolve(base, g.require<std::string>("file"))));
    try {
      graph = wl::CsrGraph::parse_edge_list(in);
    } catch (const Error& e) {
      throw ScenarioError(std::string("graph file: ") + e.what());
    }
  } else if (g.has("vertices")) {
    const auto n = g.require<std::uint32_t>("vertices");
    const auto d = g.get<std::uint32_t>("max_degree", 8);
    std::mt19937_64 rng(g.get<std::uint64_t>("seed", seed));
    if (n == 0) throw ScenarioError(g.path("vertices") + ": must be positive");
    graph = wl::CsrGraph::random_bounded(n, d, rng);
  } else {
    throw ScenarioError(w.path("graph") + ": needs 'file' or 'vertices'");
  }
  g.done();
  return graph;
}

wl::CommonNeighborsParams parse_common_neighbors(Fields& w, std::uint64_t seed, const fs::path& base) {
  wl::CommonNeighborsParams p;
  p.graph = parse_graph(w, seed, base);
  p.hops = w.get("hops", p.hops);
  const std::string path = w.get<std::string>("path", "cp");
  if (path != "cp" && path != "host") throw ScenarioError(w.path("path") + ": must be 'cp' or 'host'");
  p.use_cp = path == "cp";
  p.prefetch = w.get("prefetch", p.prefetch);
  p.gather = w.get("gather", p.gather);
  p.attribute_bytes = w.get("attribute_bytes", p.attribute_bytes);
  if (w.has("queries")) {
    p.queries = w.require<std::vector<std::pair<std::uint32_t, std::uint32_t>>>("queries");
  }
  if (w.has("random_queries")) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const auto n = w.require<std::uint32_t>("random_queries");
    if (p.graph.n == 0) throw ScenarioError("random queries need a non-empty graph");
    std::uniform_int_distribution<std::uint32_t> pick(0, p.graph.n - 1);
    for (std::uint32_t i = 0; i < n; ++i) p.queries.emplace_back(pick(rng), pick(rng));
  }
  if (p.queries.empty()) throw ScenarioError(w.path("queries") + ": at least one query is required");
  if (p.hops < 1 || p.hops > 3) throw ScenarioError(w.path("hops") + ": must be in [1, 3]");
  for (auto [a, b] : p.queries)
    if (a >= p.graph.n || b >= p.graph.n) throw ScenarioError(w.path("queries") + ": source beyond vertex count");
  if (p.use_cp && p.graph.n > wl::kMaxTraversalVertices)
    throw ScenarioError(fmt::format("graph has {} vertices; the traversal program handles at most {}", p.graph.n,
                                    wl::kMaxTraversalVertices));
  if (p.gather && !p.use_cp) throw ScenarioError(w.path("gather") + ": needs path 'cp'");
  return p;
}

wl::SelectParams parse_select(Fields& w, std::uint64_t seed, const fs::path& base) {
  wl::SelectParams p;
  p.rows = w.get("rows", p.rows);
  p.selectivity_pct = w.get("selectivity_pct", p.selectivity_pct);
  p.column = w.get("column", p.column);
  p.table_seed = w.get("table_seed", seed);
  if (w.has("constant")) p.constant = w.require<std::uint64_t>("constant");
  const std::string mode = w.get<std::string>("mode", "stream");
  if (mode == "stream")
    p.mode = wl::SelectMode::Stream;
  else if (mode == "materialize")
    p.mode = wl::SelectMode::Materialize;
  else
    throw ScenarioError(w.path("mode") + ": must be 'stream' or 'materialize'");
  if (w.has("table_file")) {
    try {
      p.table = wl::Table::from_bytes(read_binary(resolve(base, w.require<std::string>("table_file"))));
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(std::string("table file: ") + e.what());
    }
    if (p.table->rows.empty()) throw ScenarioError("table file holds no rows");
  } else if (p.rows == 0) {
    throw ScenarioError(w.path("rows") + ": must be positive");
  }
  if (p.column < 1 || p.column >= wl::kRowWords) throw ScenarioError(w.path("column") + ": must be in [1, 7]");
  if (p.selectivity_pct > 100) throw ScenarioError(w.path("selectivity_pct") + ": must be <= 100");
  return p;
}

wl::BulkParams parse_bulk(Fields& w) {
  wl::BulkParams p;
  const std::string op = w.require<std::string>("op");
  if (op == "zero")
    p.kind = wl::BulkKind::Zero;
  else if (op == "copy")
    p.kind = wl::BulkKind::Copy;
  else
    throw ScenarioError(w.path("op") + ": must be 'zero' or 'copy'");
  p.len = w.get("len", p.len);
  if (w.has("dst_offset")) p.dst_offset = w.require<std::uint64_t>("dst_offset");
  p.poll_ns = w.get("poll_ns", p.poll_ns);
  p.verify_with_reads = w.get("verify_with_reads", p.verify_with_reads);
  if (p.len == 0 || !is_line_aligned(p.len)) throw ScenarioError(w.path("len") + ": must be a positive multiple of 64");
  if (p.dst_offset && (p.kind != wl::BulkKind::Copy || !is_line_aligned(*p.dst_offset)))
    throw ScenarioError(w.path("dst_offset") + ": only for copies, and must be a multiple of 64");
  return p;
}

wl::AccessStatsParams parse_access_stats(Fields& w, std::uint64_t seed) {
  wl::AccessStatsParams p;
  p.pages = w.get("pages", p.pages);
  p.trace_len = w.get("trace_len", p.trace_len);
  p.top_k = w.get("top_k", p.top_k);
  p.trace_seed = w.get("trace_seed", seed);
  if (p.pages == 0) throw ScenarioError(w.path("pages") + ": must be positive");
  return p;
}

wl::SchedParams parse_sched(Fields& w) {
  wl::SchedParams p;
  p.weights = w.get("weights", p.weights);
  p.policy = parse_policy(w.get<std::string>("policy", "rr"), w.path("policy"));
  p.processors = w.get("processors", p.processors);
  p.measure_ns = w.get("measure_ns", p.measure_ns);
  if (p.weights.empty()) throw ScenarioError(w.path("weights") + ": at least one MCC is required");
  for (auto x : p.weights)
    if (x == 0) throw ScenarioError(w.path("weights") + ": weights must be >= 1");
  return p;
}

wl::StressParams parse_stress(Fields& w, std::uint64_t seed) {
  wl::StressParams p;
  p.instances = w.get("instances", p.instances);
  p.processors = w.get("processors", p.processors);
  p.policy = parse_policy(w.get<std::string>("policy", "rr"), w.path("policy"));
  p.run_ns = w.get("run_ns", p.run_ns);
  p.seed = seed;
  return p;
}

wl::FuzzParams parse_fuzz(Fields& w, std::uint64_t seed) {
  wl::FuzzParams p;
  p.programs = w.get("programs", p.programs);
  p.run_ns = w.get("run_ns", p.run_ns);
  p.seed = seed;
  return p;
}

wl::ProgramParams parse_program(Fields& w, const fs::path& base, Safety safety) {
  wl::ProgramParams p;
  if (w.has("source")) {
    const fs::path src = resolve(base, w.require<std::string>("source"));
    const AssemblyResult r = assemble(read_text(src));
    if (!r.ok()) throw ScenarioError(src.string() + ":\n" + r.report());
    p.image = std::make_shared<const ChannelProgramImage>(*r.image);
  } else if (w.has("image")) {
    const auto bytes = read_binary(resolve(base, w.require<std::string>("image")));
    auto parsed = ChannelProgramImage::parse(bytes);
    if (!parsed.image) throw ScenarioError(std::string("program image rejected: ") + to_string(parsed.error));
    p.image = std::make_shared<const ChannelProgramImage>(std::move(*parsed.image));
  } else {
    throw ScenarioError(w.path("source") + ": a program needs 'source' or 'image'");
  }
  p.params = w.get("params", p.params);
  if (p.params.size() > kMaxParams) throw ScenarioError(w.path("params") + ": at most 8 parameters");
  if (safety == Safety::Enforce) {
    const SafetyReport rep = check_safety(*p.image);
    if (!rep.ok()) throw ScenarioError("static safety check failed (set \"safety\": \"bypass\" to run anyway):\n" + rep.format());
  }
  return p;
}

Workload parse_workload(const json& j, std::uint64_t seed, const fs::path& base, Safety safety) {
  Fields w(j, "workload");
  const std::string kind = w.require<std::string>("kind");
  Workload out;
  if (kind == "common_neighbors")
    out = parse_common_neighbors(w, seed, base);
  else if (kind == "select")
    out = parse_select(w, seed, base);
  else if (kind == "bulk")
    out = parse_bulk(w);
  else if (kind == "access_stats")
    out = parse_access_stats(w, seed);
  else if (kind == "sched")
    out = parse_sched(w);
  else if (kind == "stress")
    out = parse_stress(w, seed);
  else if (kind == "fuzz")
    out = parse_fuzz(w, seed);
  else if (kind == "program")
    out = parse_program(w, base, safety);
  else
    throw ScenarioError("workload.kind: unknown kind '" + kind + "'");
  w.done();
  return out;
}

}  // namespace

const char* kind_name(const Workload& w) {
  static constexpr const char* kNames[] = {"common_neighbors", "select", "bulk",   "access_stats",
                                           "sched",            "stress", "fuzz", "program"};
  return kNames[w.index()];
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ScenarioError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ScenarioError("override key '" + key + "' has an empty component");
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw ScenarioError("override key '" + key + "': '" + part + "' is not an array index");
      }
      if (idx >= node->size()) throw ScenarioError("override key '" + key + "': index out of range");
      node = &(*node)[idx];
    } else {
      if (!node->is_null() && !node->is_object())
        throw ScenarioError("override key '" + key + "' descends into a scalar");
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

Scenario parse(const json& doc, const fs::path& base_dir) {
  Fields f(doc, "scenario");
  const int schema = f.require<int>("schema");
  if (schema != kSchemaVersion)
    throw ScenarioError(fmt::format("unsupported schema version {} (expected {})", schema, kSchemaVersion));
  Scenario s;
  s.base_dir = base_dir;
  s.name = f.require<std::string>("name");
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
    throw ScenarioError("scenario.name must be a plain non-empty name");
  s.seed = f.get<std::uint64_t>("seed", 1);
  s.sim = f.has("config") ? parse_sim(f.raw("config"), SimConfig{}) : SimConfig{};
  s.sim.seed = s.seed;
  try {
    s.sim.validate();
  } catch (const Error& e) {
    throw ScenarioError(std::string("config: ") + e.what());
  }
  if (f.has("nodes")) {
    const json& nodes = f.raw("nodes");
    if (!nodes.is_array() || nodes.empty()) throw ScenarioError("scenario.nodes: expected a non-empty array");
    s.nodes.clear();
    std::set<NodeId> ids;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      NodeConfig n = parse_node(nodes[i], i);
      if (!ids.insert(n.id).second) throw ScenarioError(fmt::format("scenario.nodes: duplicate node id {}", n.id));
      if (n.id == kHostPort) throw ScenarioError("scenario.nodes: node id reserved for the host");
      try {
        n.validate();
      } catch (const Error& e) {
        throw ScenarioError(fmt::format("nodes[{}]: {}", i, e.what()));
      }
      s.nodes.push_back(n);
    }
  }
  if (f.has("safety")) {
    const auto v = f.require<std::string>("safety");
    if (v == "enforce")
      s.safety = Safety::Enforce;
    else if (v == "bypass")
      s.safety = Safety::Bypass;
    else
      throw ScenarioError("scenario.safety must be 'enforce' or 'bypass'");
  }
  s.output_dir = fs::path("mccsim-out") / s.name;
  if (f.has("output")) {
    Fields o(f.raw("output"), "output");
    if (o.has("dir")) s.output_dir = resolve(base_dir, o.require<std::string>("dir"));
    s.trace = o.get("trace", false);
    o.done();
  }
  s.workload = parse_workload(f.has("workload") ? f.raw("workload") : throw ScenarioError("scenario: missing required key 'workload'"),
                              s.seed, base_dir, s.safety);
  f.done();
  return s;
}

Scenario load(const fs::path& file, const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
  json doc = json::parse(read_text(file), nullptr, false, true);
  if (doc.is_discarded()) throw ScenarioError(file.string() + ": not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return parse(doc, file.has_parent_path() ? file.parent_path() : fs::path("."));
}

Result run(const Scenario& s, std::ostream* trace) {
  wl::RunOptions o;
  o.sim = s.sim;
  o.nodes = s.nodes;
  o.trace = trace;
  const wl::Report rep = std::visit(
      [&](const auto& p) -> wl::Report {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, wl::CommonNeighborsParams>) return wl::run_common_neighbors(p, o);
        else if constexpr (std::is_same_v<P, wl::SelectParams>) return wl::run_select(p, o);
        else if constexpr (std::is_same_v<P, wl::BulkParams>) return wl::run_bulk(p, o);
        else if constexpr (std::is_same_v<P, wl::AccessStatsParams>) return wl::run_access_stats(p, o);
        else if constexpr (std::is_same_v<P, wl::SchedParams>) return wl::run_sched(p, o);
        else if constexpr (std::is_same_v<P, wl::StressParams>) return wl::run_stress(p, o);
        else if constexpr (std::is_same_v<P, wl::FuzzParams>) return wl::run_fuzz(p, o);
        else return wl::run_program(p, o);
      },
      s.workload);
  Result r;
  r.oracle_ok = rep.oracle_ok;
  r.outcome = rep.outcome;
  r.trace_hash = rep.trace_hash;
  r.makespan = rep.makespan;
  r.stats = rep.stats;
  r.summary = rep.summary;
  if (rep.outcome == RunOutcome::Deadlock)
    r.exit_code = kDeadlock;
  else if (!rep.oracle_ok)
    r.exit_code = kOracleMismatch;
  return r;
}

std::string stats_csv(const Result& r) {
  std::string out = std::string(kStatsHeader) + "\n";
  for (const MccStatsRow& row : r.stats) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", row.mcc, row.app, row.node, row.stats.instructions,
                       row.stats.dram_bytes, row.stats.dma_bytes, row.stats.stream_lines, to_string(row.status),
                       r.makespan);
  }
  return out;
}

void write_atomically(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

}  // namespace mccsim::scenario
