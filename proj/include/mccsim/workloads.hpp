#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mccsim/cp_lang.hpp"
#include "mccsim/host_api.hpp"

namespace mccsim::workloads {

// ---------------------------------------------------------------------------
// Channel programs shipped with the workloads.
namespace programs {

/// BFS server. Params: row_offsets VA, col_indices VA, vertex count, flags
/// (bit 0: prefetch). A request line written to data offset kTraversalRequest
/// holds {source, hops}; the answer is a NeighborStream in ring slots 0..15.
extern const char* const kTraversal;
/// Params: attribute array VA, record bytes, host destination VA. Id lines
/// written to kGatherRequest are DMA'd record by record; a line {count} in
/// slot 0 reports completion.
extern const char* const kGather;
/// Params: table VA, rows, constant, column (1..7), mode (0 stream, 1
/// materialize), host destination VA.
extern const char* const kSelect;
/// Params: dst VA, src VA, length, kind (0 zero, 1 copy). Writes a status line
/// {1 ok | 2 rejected} to slot 0 when finished.
extern const char* const kBulk;
/// Params: region VA, page count, counters VA (8 bytes per page).
extern const char* const kAccessStats;
extern const char* const kBusyLoop;
extern const char* const kWaitNone;

std::shared_ptr<const ChannelProgramImage> traversal();
std::shared_ptr<const ChannelProgramImage> gather();
std::shared_ptr<const ChannelProgramImage> select();
std::shared_ptr<const ChannelProgramImage> bulk();
std::shared_ptr<const ChannelProgramImage> access_stats();
std::shared_ptr<const ChannelProgramImage> busy_loop();
std::shared_ptr<const ChannelProgramImage> wait_none();

}  // namespace programs

inline constexpr std::uint64_t kTraversalRequest = 32768;
inline constexpr std::uint64_t kGatherRequest = 36864;
inline constexpr std::uint64_t kStatsQuery = 64;
inline constexpr std::uint64_t kStatsAnswer = 128;
inline constexpr std::uint32_t kSentinel = 0xFFFF'FFFF;
inline constexpr std::uint32_t kMaxTraversalVertices = 12288;
inline constexpr std::size_t kStreamRing = 16;

// ---------------------------------------------------------------------------
// Graphs.

struct CsrGraph {
  std::uint32_t n = 0;
  std::vector<std::uint32_t> row_offsets;  // n + 1 entries
  std::vector<std::uint32_t> col_indices;

  std::uint32_t degree(std::uint32_t v) const { return row_offsets[v + 1] - row_offsets[v]; }
  bool valid() const;

  /// Undirected graph from an edge list; self loops and duplicates dropped,
  /// neighbor lists sorted.
  static CsrGraph from_edges(std::uint32_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges);
  /// Random undirected graph in which no vertex exceeds `max_degree`.
  static CsrGraph random_bounded(std::uint32_t n, std::uint32_t max_degree, std::mt19937_64& rng);
  /// Random undirected graph with `edges` attempted edges.
  static CsrGraph random_uniform(std::uint32_t n, std::uint64_t edges, std::mt19937_64& rng);
  /// Text edge list: one `u v` pair per line, `#` comments. Vertex count is
  /// max id + 1 unless a `# vertices N` line says otherwise.
  static CsrGraph parse_edge_list(std::istream& in);
};

/// Vertices within `hops` of `src`, excluding `src`, ascending.
std::vector<std::uint32_t> reach_oracle(const CsrGraph& g, std::uint32_t src, std::uint32_t hops);
/// Intersection of both reach sets, ascending. Sources are never part of
/// their own reach set.
std::vector<std::uint32_t> common_neighbors_oracle(const CsrGraph& g, std::uint32_t a, std::uint32_t b,
                                                   std::uint32_t hops);
std::vector<std::uint32_t> intersect_sorted(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

/// Where a graph lives in an app's far memory.
struct GraphLayout {
  std::uint32_t n = 0;
  std::uint64_t rows_va = 0;
  std::uint64_t cols_va = 0;
};

/// Maps and fills the CSR arrays (untimed setup). The column array gets one
/// spare line so line-granular readers never run off its end.
GraphLayout place_graph(HostApp& app, NodeId node, const CsrGraph& g);

/// Host-side BFS that pulls every row-offset and adjacency line across the
/// interconnect; only the most recently read line is reused.
Task<std::vector<std::uint32_t>> host_reach(HostApp& app, GraphLayout g, std::uint32_t src, std::uint32_t hops);

/// Asks a running traversal CP for the reach set of `src`.
/// `prefetched` receives the adjacency lines streamed in prefetch mode.
Task<std::vector<std::uint32_t>> cp_reach(HostApp& app, MccHandle h, std::uint32_t src, std::uint32_t hops,
                                          bool prefetch, std::vector<CacheLine>* prefetched = nullptr);

// ---------------------------------------------------------------------------
// Tables.

inline constexpr std::size_t kRowWords = 8;

/// Fixed 64-byte rows: word 0 is the row id, words 1..7 are columns.
struct Table {
  std::vector<std::array<std::uint64_t, kRowWords>> rows;

  /// Column values drawn so that exactly `pct`% of rows satisfy
  /// `column < threshold(pct)` (n must be a multiple of 100 for exactness).
  static Table generate(std::size_t n, std::mt19937_64& rng);
  static std::uint64_t threshold(unsigned pct) { return pct * 100ull; }
  std::vector<std::uint8_t> bytes() const;
  /// Binary format: little-endian rows of eight u64 words.
  static Table from_bytes(const std::vector<std::uint8_t>& bytes);
};

std::vector<std::uint64_t> select_oracle(const Table& t, unsigned column, std::uint64_t constant);

// ---------------------------------------------------------------------------
// Access statistics.

struct TraceEntry {
  std::uint32_t page = 0;
  std::uint32_t line = 0;  // line index inside the page
  bool write = false;
};

std::vector<TraceEntry> make_trace(std::uint32_t pages, std::size_t len, std::mt19937_64& rng);
std::vector<std::uint64_t> page_counts(const std::vector<TraceEntry>& trace, std::uint32_t pages);
/// Hottest first, ties broken by the lower page number.
std::vector<std::pair<std::uint32_t, std::uint64_t>> top_k_oracle(const std::vector<std::uint64_t>& counts,
                                                                  std::size_t k);

// ---------------------------------------------------------------------------
// Whole-run workloads. Each builds its own System.

struct RunOptions {
  SimConfig sim;
  std::vector<NodeConfig> nodes{NodeConfig{}};
  std::ostream* trace = nullptr;
  SimTime limit = kForever;
};

struct Report {
  bool oracle_ok = false;
  RunOutcome outcome = RunOutcome::Quiescent;
  SimTime makespan = 0;  // simulated time when the driver finished
  std::uint64_t trace_hash = 0;
  std::uint64_t events = 0;
  std::vector<MccStatsRow> stats;
  std::string summary;
};

struct CommonNeighborsParams {
  CsrGraph graph;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> queries;
  std::uint32_t hops = 2;
  bool use_cp = true;
  bool prefetch = false;
  /// After each query, DMA the attribute records of the result set into host
  /// memory with the gather CP.
  bool gather = false;
  std::uint32_t attribute_bytes = 64;
};

struct CommonNeighborsReport : Report {
  std::vector<std::vector<std::uint32_t>> results;
  SimTime setup_ns = 0;  // MCC creation and program upload
  SimTime phase_ns = 0;  // from the first query to the last answer
};

CommonNeighborsReport run_common_neighbors(const CommonNeighborsParams& p, const RunOptions& o = {});

enum class SelectMode : std::uint8_t { Stream = 0, Materialize = 1 };
const char* to_string(SelectMode m);

struct SelectParams {
  std::size_t rows = 1000;
  unsigned selectivity_pct = 50;
  unsigned column = 1;
  SelectMode mode = SelectMode::Stream;
  std::uint64_t table_seed = 1;
  /// A loaded table replaces the generated one; `rows` is then ignored.
  std::optional<Table> table;
  /// Overrides the constant derived from `selectivity_pct`.
  std::optional<std::uint64_t> constant;
};

struct SelectReport : Report {
  std::vector<std::uint64_t> row_ids;
  SimTime phase_ns = 0;  // START to result set in hand
};

SelectReport run_select(const SelectParams& p, const RunOptions& o = {});

enum class BulkKind : std::uint8_t { Zero = 0, Copy = 1 };

struct BulkParams {
  BulkKind kind = BulkKind::Zero;
  std::uint64_t len = 1 << 20;
  /// Copy only: place dst this many bytes after src (overlap when < len).
  std::optional<std::uint64_t> dst_offset;
  SimTime poll_ns = 1000;
  bool verify_with_reads = true;
};

struct BulkReport : Report {
  bool rejected = false;
  SimTime start_at = 0;       // START applied at the node
  SimTime completion_at = 0;  // DMA completion
  std::uint64_t steps_between = 0;  // driver steps strictly between the two
  std::uint64_t bytes_verified = 0;
};

BulkReport run_bulk(const BulkParams& p, const RunOptions& o = {});

struct AccessStatsParams {
  std::uint32_t pages = 16;
  std::size_t trace_len = 1000;
  std::size_t top_k = 4;
  std::uint64_t trace_seed = 1;
  /// Replaces the generated trace when set.
  std::optional<std::vector<TraceEntry>> trace;
};

struct AccessStatsReport : Report {
  std::vector<std::uint64_t> counters;  // as left in far memory by the CP
  std::vector<std::uint64_t> expected;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> top_k;
};

AccessStatsReport run_access_stats(const AccessStatsParams& p, const RunOptions& o = {});

struct SchedParams {
  std::vector<std::uint32_t> weights{1, 1, 1, 1, 1, 1, 1, 1};
  SchedPolicy policy = SchedPolicy::RoundRobin;
  std::uint32_t processors = 1;
  SimTime measure_ns = 1'200'000;
};

struct SchedReport : Report {
  std::vector<std::uint64_t> instructions;  // per MCC, over the measured window
  std::vector<double> shares;
  std::uint64_t total = 0;
};

SchedReport run_sched(const SchedParams& p, const RunOptions& o = {});

struct StressParams {
  std::uint32_t instances = 1000;
  std::uint32_t processors = 2;
  SchedPolicy policy = SchedPolicy::RoundRobin;
  SimTime run_ns = 2'000'000;
  std::uint64_t seed = 1;
};

struct StressReport : Report {
  std::uint64_t violations = 0;
  std::uint64_t max_wait_quanta = 0;
  std::uint64_t quanta = 0;
  std::uint32_t never_ran = 0;  // Ready-capable instances with zero instructions
  std::uint32_t faulted = 0;
};

StressReport run_stress(const StressParams& p, const RunOptions& o = {});

struct FuzzParams {
  std::uint64_t seed = 1;
  std::size_t programs = 100;
  SimTime run_ns = 200'000;
};

struct FuzzReport : Report {
  std::size_t runs = 0;
  std::size_t accesses_checked = 0;
  std::size_t fuzz_accesses = 0;  // issued by the random programs
  std::size_t runs_with_access = 0;
  std::size_t violations = 0;
  std::size_t victim_failures = 0;
  std::size_t fuzz_faulted = 0;
  std::string first_violation;
};

/// Generates a random image whose header validates.
ChannelProgramImage random_image(std::mt19937_64& rng, const std::vector<std::uint64_t>& interesting);

FuzzReport run_fuzz(const FuzzParams& p, const RunOptions& o = {});

struct ProgramParams {
  std::shared_ptr<const ChannelProgramImage> image;
  std::vector<std::uint64_t> params;
};

/// Loads and starts one program and lets the simulation run to its end.
Report run_program(const ProgramParams& p, const RunOptions& o = {});

}  // namespace mccsim::workloads
