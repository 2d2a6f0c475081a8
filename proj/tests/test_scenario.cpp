#include <gtest/gtest.h>
#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "mccsim/scenario.hpp"

using namespace mccsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() {
  return json::parse(R"({"schema": 1, "name": "t", "workload": {"kind": "bulk", "op": "zero", "len": 4096}})");
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("mccsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

struct Cli {
  int code = -1;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(MCCSIM_CLI) + " " + args + " 2>&1";
  Cli r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int raw = pclose(pipe);
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Scenario, ParsesDefaults) {
  const auto s = scenario::parse(minimal(), ".");
  EXPECT_EQ(s.name, "t");
  EXPECT_EQ(s.seed, 1u);
  EXPECT_EQ(s.nodes.size(), 1u);
  EXPECT_STREQ(scenario::kind_name(s.workload), "bulk");
  EXPECT_EQ(std::get<workloads::BulkParams>(s.workload).len, 4096u);
}

TEST(Scenario, UnknownKeysAreRejectedAtEveryLevel) {
  for (const char* path : {"/extra", "/config/far_base_latncy_ns", "/workload/lenght", "/output/dirr"}) {
    json doc = minimal();
    doc["output"] = json::object();
    doc[json::json_pointer(path)] = 1;
    EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError) << path;
  }
}

TEST(Scenario, SchemaAndValueChecks) {
  json doc = minimal();
  doc["schema"] = 2;
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["config"]["hops"] = -1;
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["config"]["watchdog_ns"] = "soon";
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["nodes"] = json::parse(R"([{"id": 0}, {"id": 0}])");
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["workload"]["len"] = 100;
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["workload"] = json::parse(R"({"kind": "teleport"})");
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
  doc = minimal();
  doc["workload"] = json::parse(R"({"kind": "select", "table_file": "missing.bin"})");
  EXPECT_THROW(scenario::parse(doc, "."), scenario::ScenarioError);
}

TEST(Scenario, OverridesUseDottedPaths) {
  json doc = minimal();
  scenario::apply_override(doc, "config.hops=2");
  scenario::apply_override(doc, "workload.op=copy");
  scenario::apply_override(doc, "nodes=[{\"id\": 3, \"policy\": \"wfq\"}]");
  scenario::apply_override(doc, "nodes.0.processors=4");
  const auto s = scenario::parse(doc, ".");
  EXPECT_EQ(s.sim.hops, 2u);
  EXPECT_EQ(std::get<workloads::BulkParams>(s.workload).kind, workloads::BulkKind::Copy);
  ASSERT_EQ(s.nodes.size(), 1u);
  EXPECT_EQ(s.nodes[0].id, 3u);
  EXPECT_EQ(s.nodes[0].processors, 4u);
  EXPECT_EQ(s.nodes[0].policy, SchedPolicy::Wfq);
  EXPECT_THROW(scenario::apply_override(doc, "novalue"), scenario::ScenarioError);
  EXPECT_THROW(scenario::apply_override(doc, "nodes.7.id=1"), scenario::ScenarioError);
}

TEST(Scenario, GraphAndTableFilesResolveAgainstTheScenario) {
  TempDir dir;
  dir.write("g.edges", "# vertices 4\n0 1\n1 2\n2 3\n");
  std::mt19937_64 rng(2);
  const auto table = workloads::Table::generate(200, rng);
  const auto bytes = table.bytes();
  std::ofstream(dir.path() / "t.bin", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                             static_cast<std::streamsize>(bytes.size()));
  const auto cn = dir.write("cn.scenario", R"({"schema": 1, "name": "cn", "workload": {"kind": "common_neighbors",
      "graph": {"file": "g.edges"}, "queries": [[0, 2]], "hops": 1}})");
  const auto sel = dir.write("sel.scenario", R"({"schema": 1, "name": "sel", "workload": {"kind": "select",
      "table_file": "t.bin", "selectivity_pct": 25, "mode": "materialize"}})");

  const auto a = scenario::load(cn);
  EXPECT_EQ(std::get<workloads::CommonNeighborsParams>(a.workload).graph.n, 4u);
  const auto ra = scenario::run(a);
  EXPECT_EQ(ra.exit_code, scenario::kOk) << ra.summary;

  const auto b = scenario::load(sel);
  EXPECT_EQ(std::get<workloads::SelectParams>(b.workload).table->rows, table.rows);
  const auto rb = scenario::run(b);
  EXPECT_EQ(rb.exit_code, scenario::kOk) << rb.summary;
}

TEST(Scenario, SeedOverrideChangesGeneratedInputs) {
  TempDir dir;
  const auto f = dir.write("s.scenario", R"({"schema": 1, "name": "s", "workload": {"kind": "access_stats"}})");
  const auto a = scenario::run(scenario::load(f, {}, 1));
  const auto b = scenario::run(scenario::load(f, {}, 1));
  const auto c = scenario::run(scenario::load(f, {}, 2));
  EXPECT_EQ(a.trace_hash, b.trace_hash);
  EXPECT_NE(a.trace_hash, c.trace_hash);
}

TEST(Scenario, ProgramSafetyGate) {
  TempDir dir;
  dir.write("w.cpasm", ".events NONE\nWAIT NONE\nHALT\n");
  const auto enforce = dir.write("e.scenario", R"({"schema": 1, "name": "e",
      "workload": {"kind": "program", "source": "w.cpasm"}})");
  EXPECT_THROW(scenario::load(enforce), scenario::ScenarioError);
  const auto bypass = dir.write("b.scenario", R"({"schema": 1, "name": "b", "safety": "bypass",
      "config": {"watchdog_ns": 5000}, "workload": {"kind": "program", "source": "w.cpasm"}})");
  const auto r = scenario::run(scenario::load(bypass));
  EXPECT_EQ(r.outcome, RunOutcome::Deadlock);
  EXPECT_EQ(r.exit_code, scenario::kDeadlock);
}

TEST(Scenario, StatsCsvHasStableColumns) {
  auto s = scenario::parse(minimal(), ".");
  const auto r = scenario::run(s);
  const std::string csv = scenario::stats_csv(r);
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "mcc_id,app_id,node_id,instructions,dram_bytes,dma_bytes,stream_lines,status,makespan_ns");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
  EXPECT_NE(row.find(",4096,"), std::string::npos) << row;
  EXPECT_NE(row.find("Halted"), std::string::npos);
}

TEST(Scenario, WriteAtomicallyLeavesNoTemporaries) {
  TempDir dir;
  const auto target = dir.path() / "sub" / "x.txt";
  scenario::write_atomically(target, "one");
  scenario::write_atomically(target, "two");
  EXPECT_EQ(slurp(target), "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Cli, AssembleDisassembleRoundTrip) {
  TempDir dir;
  const auto src = dir.write("p.cpasm", ".params 1\n.events NONE\n PARAM 0, r1\nl: SUB r1, r1, 1\n BNE r1, r0, l\n HALT\n");
  const auto img = dir.path() / "p.mccp";
  ASSERT_EQ(cli(fmt::format("asm {} -o {}", src.string(), img.string())).code, 0);
  EXPECT_EQ(slurp(img).substr(0, 4), "MCCP");
  const auto back = dir.path() / "back.cpasm";
  ASSERT_EQ(cli(fmt::format("disasm {} -o {}", img.string(), back.string())).code, 0);
  const auto img2 = dir.path() / "p2.mccp";
  ASSERT_EQ(cli(fmt::format("asm {} -o {}", back.string(), img2.string())).code, 0);
  EXPECT_EQ(slurp(img), slurp(img2));
}

TEST(Cli, AssemblerDiagnosticsExitOne) {
  TempDir dir;
  const auto src = dir.write("bad.cpasm", "BR nowhere\n");
  const auto img = dir.path() / "bad.mccp";
  const Cli r = cli(fmt::format("asm {} -o {}", src.string(), img.string()));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("UndefinedLabel"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(img));
  EXPECT_EQ(cli(fmt::format("asm {} -o {}", (dir.path() / "none.cpasm").string(), img.string())).code, 2);
}

TEST(Cli, RunWritesStatsAndExitCodes) {
  TempDir dir;
  const auto out = dir.path() / "out";
  const Cli ok = cli(fmt::format("run {}/bulk_zero.scenario --override workload.len=65536 --out {}", MCCSIM_SCENARIOS,
                                 out.string()));
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("trace_hash=0x"), std::string::npos);
  const std::string csv = slurp(out / "stats.csv");
  EXPECT_NE(csv.find(",65536,65536,"), std::string::npos) << csv;
  EXPECT_FALSE(fs::exists(out / "trace.log"));

  const auto bad = dir.path() / "bad";
  const Cli typo = cli(fmt::format("run {}/bulk_zero.scenario --override config.far_base_latncy_ns=1 --out {}",
                                   MCCSIM_SCENARIOS, bad.string()));
  EXPECT_EQ(typo.code, 2);
  EXPECT_FALSE(fs::exists(bad));

  const Cli traced = cli(fmt::format("run {}/select.scenario --trace --out {}", MCCSIM_SCENARIOS, out.string()));
  EXPECT_EQ(traced.code, 0);
  EXPECT_GT(slurp(out / "trace.log").size(), 0u);
}
