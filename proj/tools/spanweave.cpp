// spanweave command line: gen | run | breakdown | compare.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spanweave/analysis.hpp"
#include "spanweave/config.hpp"
#include "spanweave/errors.hpp"
#include "spanweave/exporter.hpp"
#include "spanweave/runner.hpp"
#include "spanweave/simgen.hpp"

namespace sw = spanweave;

namespace {

constexpr int kExitFatal = 1;
constexpr int kExitUsage = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("spanweave");
  logger->set_pattern("spanweave: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SPANWEAVE_LOG"); env != nullptr && *env != '\0') {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept a real "off".
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring SPANWEAVE_LOG='{}'", env);
    }
  }
}

int exit_code_for(sw::ErrorCode code) {
  return code == sw::ErrorCode::Config || code == sw::ErrorCode::WindowInverted ? kExitUsage
                                                                                : kExitFatal;
}

std::vector<sw::Trace> load_traces(const std::string& path) {
  return sw::group_traces(sw::load_jsonl(std::filesystem::path(path)));
}

std::vector<sw::RouteSpec> load_routes(const std::string& config_path) {
  if (config_path.empty()) return {};
  return sw::load_config(config_path).routes;
}

struct GenArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  std::uint64_t requests = 1;
  double delta_q_us = static_cast<double>(sw::kDefaultQueueingDelta) / 1e6;
  double window_us = static_cast<double>(sw::kDefaultCausalityWindowPs) / 1e6;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  sw::Scenario s;
  s.name = *sw::scenario_from_string(a.scenario);
  s.seed = a.seed;
  s.n_requests = a.requests;
  s.queueing_delta_ps = static_cast<std::uint64_t>(a.delta_q_us * 1e6 + 0.5);
  s.window_ps = static_cast<std::uint64_t>(a.window_us * 1e6 + 0.5);
  const auto files = sw::generate(s, a.out);
  spdlog::info("wrote {} logs, truth and wiring to {}", files.logs.size(), files.dir.string());
  std::cout << files.wiring.string() << "\n";
  return 0;
}

struct RunArgs {
  std::string config;
  std::string execution;
  std::string format;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  auto config = sw::load_config(a.config);
  if (!a.format.empty() || !a.out.empty()) {
    if (a.format.empty() || a.out.empty()) {
      throw sw::Error(sw::ErrorCode::Config, "--format and --out must be given together");
    }
    config.exports = {{a.format == "jaeger" ? sw::ExportFormat::Jaeger : sw::ExportFormat::Jsonl,
                       a.out}};
  }
  sw::RunControl control;
  if (a.execution == "concurrent") control.execution = sw::Execution::Concurrent;
  if (a.execution == "single_threaded") control.execution = sw::Execution::SingleThreaded;
  if (a.execution == "auto") control.execution = sw::Execution::Auto;
  spdlog::info("running {} components ({} mode)", config.components.size(),
               config.online ? "online" : "offline");
  const auto stats = sw::build_and_run(config, control);
  for (const auto& [component, errors] : stats.errors) {
    for (const auto& e : errors) spdlog::warn("{}:{}: {}", component, e.line_no, e.reason);
  }
  std::cout << sw::run_stats_json(stats) << "\n";
  return 0;
}

struct BreakdownArgs {
  std::string spans;
  std::string config;
  std::string trace;
  bool summary = false;
};

int cmd_breakdown(const BreakdownArgs& a) {
  const auto traces = load_traces(a.spans);
  const auto routes = load_routes(a.config);
  if (!a.trace.empty()) {
    const auto id = sw::TraceId::from_hex(a.trace);
    if (!id) throw sw::Error(sw::ErrorCode::Config, "--trace: not a 32-digit hex trace id");
    std::cout << sw::breakdown_json(sw::breakdown(traces, *id, routes)) << "\n";
    return 0;
  }
  const auto all = sw::breakdown_requests(traces, routes);
  if (a.summary) {
    std::cout << sw::summary_json(sw::summarize(all)) << "\n";
  } else {
    for (const auto& b : all) std::cout << sw::breakdown_json(b) << "\n";
  }
  return 0;
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string config;
  bool json = false;
};

int cmd_compare(const CompareArgs& c) {
  const auto routes = load_routes(c.config);
  const auto sa = sw::summarize(sw::breakdown_requests(load_traces(c.a), routes));
  const auto sb = sw::summarize(sw::breakdown_requests(load_traces(c.b), routes));
  const auto rows = sw::compare(sa, sb);
  std::cout << (c.json ? sw::compare_json(rows) + "\n" : sw::compare_table(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"spanweave: reconstruct end-to-end traces from modular simulator logs"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic scenario with ground truth");
  gen_cmd->add_option("scenario", gen.scenario, "rpc_noload | rpc_background")
      ->required()
      ->check(CLI::IsMember({"rpc_noload", "rpc_background"}));
  gen_cmd->add_option("--seed", gen.seed, "Scenario seed");
  gen_cmd->add_option("-n,--requests", gen.requests, "Number of requests");
  gen_cmd->add_option("--delta-q", gen.delta_q_us, "Injected switch queueing (us)")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--window", gen.window_us, "Causality window (us)")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("-o,--out", gen.out, "Output directory")->required();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Parse, weave and export the configured logs");
  run_cmd->add_option("--config", run.config, "Wiring config (JSON)")->required();
  run_cmd->add_option("--execution", run.execution, "auto | concurrent | single_threaded")
      ->check(CLI::IsMember({"auto", "concurrent", "single_threaded"}));
  run_cmd->add_option("--format", run.format, "Replace the configured exports: jaeger | jsonl")
      ->check(CLI::IsMember({"jaeger", "jsonl"}));
  run_cmd->add_option("--out", run.out, "Export path used with --format");

  BreakdownArgs bd;
  auto* bd_cmd = app.add_subcommand("breakdown", "Per-component latency breakdown of traces");
  bd_cmd->add_option("spans", bd.spans, "JSONL span export")->required();
  bd_cmd->add_option("--config", bd.config, "Wiring config, for route direction");
  bd_cmd->add_option("--trace", bd.trace, "Trace id (hex); default: every request trace");
  bd_cmd->add_flag("--summary", bd.summary, "Print the mean over request traces");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Per-component deltas between two exports (B - A)");
  cmp_cmd->add_option("a", cmp.a, "JSONL span export A")->required();
  cmp_cmd->add_option("b", cmp.b, "JSONL span export B")->required();
  cmp_cmd->add_option("--config", cmp.config, "Wiring config, for route direction");
  cmp_cmd->add_flag("--json", cmp.json, "Print JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*run_cmd) return cmd_run(run);
    if (*bd_cmd) return cmd_breakdown(bd);
    if (*cmp_cmd) return cmd_compare(cmp);
  } catch (const sw::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }
  return kExitUsage;
}
