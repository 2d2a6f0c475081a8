#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mccsim/workloads.hpp"

namespace mccsim::scenario {

inline constexpr int kSchemaVersion = 1;

enum class Safety : std::uint8_t { Enforce, Bypass };

using Workload = std::variant<workloads::CommonNeighborsParams, workloads::SelectParams, workloads::BulkParams,
                              workloads::AccessStatsParams, workloads::SchedParams, workloads::StressParams,
                              workloads::FuzzParams, workloads::ProgramParams>;

/// Name of the `kind` field value for a workload.
const char* kind_name(const Workload& w);

/// A parsed and validated scenario file.
struct Scenario {
  std::string name;
  std::filesystem::path base_dir;  // relative input paths resolve against this
  std::uint64_t seed = 1;
  SimConfig sim;
  std::vector<NodeConfig> nodes{NodeConfig{}};
  Workload workload;
  std::filesystem::path output_dir;
  bool trace = false;
  Safety safety = Safety::Enforce;
};

/// Thrown for anything wrong with the scenario itself (CLI exit code 2).
class ScenarioError : public Error {
 public:
  explicit ScenarioError(const std::string& what) : Error(Errc::BadConfig, what) {}
};

/// Applies `key.path=value` to a scenario document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

Scenario parse(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Scenario load(const std::filesystem::path& file, const std::vector<std::string>& overrides = {},
              std::optional<std::uint64_t> seed = std::nullopt);

enum ExitCode : int { kOk = 0, kAsmDiagnostics = 1, kConfigError = 2, kOracleMismatch = 3, kDeadlock = 4 };

struct Result {
  int exit_code = kOk;
  bool oracle_ok = false;
  RunOutcome outcome = RunOutcome::Quiescent;
  std::uint64_t trace_hash = 0;
  SimTime makespan = 0;
  std::vector<MccStatsRow> stats;
  std::string summary;
};

/// Runs the scenario's workload. `trace` receives one line per event.
Result run(const Scenario& s, std::ostream* trace = nullptr);

/// Column order of stats.csv.
inline constexpr const char* kStatsHeader =
    "mcc_id,app_id,node_id,instructions,dram_bytes,dma_bytes,stream_lines,status,makespan_ns";

std::string stats_csv(const Result& r);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_atomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace mccsim::scenario
