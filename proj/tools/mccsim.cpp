#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mccsim/cp_lang.hpp"
#include "mccsim/scenario.hpp"

namespace fs = std::filesystem;
using namespace mccsim;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mccsim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MCCSIM_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept it when asked for.
    if (level != spdlog::level::off || std::string_view(env) == "off")
      spdlog::set_level(level);
    else
      spdlog::warn("MCCSIM_LOG='{}' is not a log level; keeping 'warn'", env);
  }
}

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  std::vector<std::string> overrides;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  scenario::Scenario s;
  try {
    s = scenario::load(a.scenario, a.overrides, a.seed);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return scenario::kConfigError;
  }
  if (!a.out.empty()) s.output_dir = a.out;
  const bool want_trace = a.trace || s.trace;
  spdlog::info("scenario '{}' ({}), seed {}", s.name, scenario::kind_name(s.workload), s.seed);

  std::ostringstream trace;
  scenario::Result r;
  try {
    r = scenario::run(s, want_trace ? &trace : nullptr);
  } catch (const std::exception& e) {
    spdlog::error("run failed: {}", e.what());
    return scenario::kConfigError;
  }

  try {
    scenario::write_atomically(s.output_dir / "stats.csv", scenario::stats_csv(r));
    if (want_trace) scenario::write_atomically(s.output_dir / "trace.log", trace.str());
  } catch (const std::exception& e) {
    spdlog::error("cannot write results: {}", e.what());
    return scenario::kConfigError;
  }

  fmt::print("outcome={} makespan_ns={} trace_hash=0x{:016x}\n", to_string(r.outcome), r.makespan, r.trace_hash);
  fmt::print("{}\n", r.summary);
  if (r.exit_code == scenario::kOracleMismatch) spdlog::error("workload output does not match its oracle");
  if (r.exit_code == scenario::kDeadlock) spdlog::error("simulation deadlocked");
  return r.exit_code;
}

int cmd_asm(const std::string& src, const std::string& out) {
  const auto text = slurp(src);
  if (!text) {
    spdlog::error("cannot read {}", src);
    return 2;
  }
  const AssemblyResult r = assemble(*text);
  if (!r.ok()) {
    for (const Diagnostic& d : r.diagnostics) std::cerr << src << ": " << d.format() << "\n";
    return 1;
  }
  const SafetyReport safety = check_safety(*r.image);
  if (!safety.clean()) std::cerr << safety.format();
  const auto bytes = r.image->serialize();
  try {
    scenario::write_atomically(out, std::string(bytes.begin(), bytes.end()));
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

int cmd_disasm(const std::string& img, const std::string& out) {
  const auto data = slurp(img);
  if (!data) {
    spdlog::error("cannot read {}", img);
    return 2;
  }
  const std::vector<std::uint8_t> bytes(data->begin(), data->end());
  const auto parsed = ChannelProgramImage::parse(bytes);
  if (!parsed.image) {
    std::cerr << img << ": invalid image (" << to_string(parsed.error) << ")\n";
    return 1;
  }
  const std::string text = disassemble(*parsed.image);
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  try {
    scenario::write_atomically(out, text);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Memory channel controller simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario file");
  run_cmd->add_option("scenario", run.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_flag("--trace", run.trace, "Write trace.log with one line per processed event");
  run_cmd->add_option("--override", run.overrides, "Set a scenario key, e.g. config.hops=2")->take_all();
  run_cmd->add_option("--out", run.out, "Output directory (default from the scenario)");

  std::string asm_src, asm_out;
  auto* asm_cmd = app.add_subcommand("asm", "Assemble channel-program source into an image");
  asm_cmd->add_option("source", asm_src, "Source file")->required();
  asm_cmd->add_option("-o,--output", asm_out, "Image file")->required();

  std::string dis_img, dis_out;
  auto* dis_cmd = app.add_subcommand("disasm", "Print an image as assembler source");
  dis_cmd->add_option("image", dis_img, "Image file")->required();
  dis_cmd->add_option("-o,--output", dis_out, "Write the source here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : scenario::kConfigError;
  }

  if (*run_cmd) return cmd_run(run);
  if (*asm_cmd) return cmd_asm(asm_src, asm_out);
  return cmd_disasm(dis_img, dis_out);
}
