// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when a
// hard criterion fails; the throughput criterion is reported only.

#include <fcntl.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spanweave/analysis.hpp"
#include "spanweave/errors.hpp"
#include "spanweave/event_model.hpp"
#include "spanweave/exporter.hpp"
#include "spanweave/parsers.hpp"
#include "spanweave/runner.hpp"
#include "spanweave/simgen.hpp"

#ifndef SPANWEAVE_CLI
#error "SPANWEAVE_CLI must be defined"
#endif

namespace fs = std::filesystem;
using namespace spanweave;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kDeltaQ = 50 * kPicosPerMicro;
constexpr std::uint64_t kTargetEvents = 1'000'000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  const char* title;
  bool soft;
  double budget_s;  // 0 = no time bound
  std::function<Outcome()> run;
};

class Workspace {
 public:
  Workspace() {
    std::string templ = (fs::temp_directory_path() / "spanweave-acceptance-XXXXXX").string();
    if (mkdtemp(templ.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    root_ = templ;
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  fs::path dir(const std::string& name) const {
    fs::create_directories(root_ / name);
    return root_ / name;
  }

 private:
  fs::path root_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<Trace> collect(const WiringConfig& config, RunStats* stats = nullptr,
                           const RunControl& control = {}) {
  std::vector<Trace> traces;
  auto s = run_graph(config, [&](Trace&& t) { traces.push_back(std::move(t)); }, control);
  if (stats) *stats = s;
  return traces;
}

/// Export bytes (Jaeger, JSONL) for a config with both exports redirected.
std::pair<std::string, std::string> export_bytes(WiringConfig config, const fs::path& out,
                                                 const RunControl& control = {}) {
  fs::create_directories(out);
  config.exports = {{ExportFormat::Jaeger, out / "trace.json"},
                    {ExportFormat::Jsonl, out / "spans.jsonl"}};
  build_and_run(config, control);
  return {read_file(out / "trace.json"), read_file(out / "spans.jsonl")};
}

int run_cli(const std::string& args, const fs::path& stdout_path) {
  const std::string cmd = "'" SPANWEAVE_CLI "' " + args + " >'" + stdout_path.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// -- criteria ---------------------------------------------------------------

Outcome taxonomy() {
  const std::size_t e[] = {kind_registry(ComponentType::Host).size(),
                           kind_registry(ComponentType::Nic).size(),
                           kind_registry(ComponentType::Network).size()};
  const std::size_t s[] = {span_kind_registry(ComponentType::Host).size(),
                           span_kind_registry(ComponentType::Nic).size(),
                           span_kind_registry(ComponentType::Network).size()};
  const bool ok = e[0] == 16 && e[1] == 9 && e[2] == 3 && s[0] == 6 && s[1] == 4 && s[2] == 1;
  return {ok, fmt("events %zu/%zu/%zu, spans %zu/%zu/%zu", e[0], e[1], e[2], s[0], s[1], s[2])};
}

Outcome oracle(const Workspace& ws) {
  std::uint64_t runs = 0;
  std::uint64_t failures = 0;
  std::uint64_t events = 0;
  std::string first_failure;
  for (auto name : {ScenarioName::RpcNoload, ScenarioName::RpcBackground}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      for (std::uint64_t n : {1, 10, 100}) {
        const auto dir = ws.dir(fmt("oracle/%s-%llu-%llu", std::string(to_string(name)).c_str(),
                                    static_cast<unsigned long long>(seed),
                                    static_cast<unsigned long long>(n)));
        const auto gen = generate_scenario({name, seed, n});
        const auto files = write_scenario(gen, dir);
        RunStats stats;
        const auto traces = collect(load_config(files.wiring), &stats);
        const auto diff = compare_with_truth(gen.truth, traces);
        const bool ok = diff.exact() && stats.contexts_unmatched == 0 && stats.unmatched_spans == 0 &&
                        stats.unmatched_completions == 0;
        ++runs;
        events += stats.events_woven;
        if (!ok) {
          ++failures;
          if (first_failure.empty()) {
            first_failure = fmt("; first failure %s seed=%llu n=%llu: span=%llu trace=%llu edge=%llu "
                                "unmatched=%llu",
                                std::string(to_string(name)).c_str(),
                                static_cast<unsigned long long>(seed), static_cast<unsigned long long>(n),
                                static_cast<unsigned long long>(diff.span_mismatches),
                                static_cast<unsigned long long>(diff.trace_mismatches),
                                static_cast<unsigned long long>(diff.edge_mismatches),
                                static_cast<unsigned long long>(stats.contexts_unmatched));
          }
        }
        fs::remove_all(dir);
      }
    }
  }
  return {failures == 0,
          fmt("%llu/%llu scenarios exact, %llu events", static_cast<unsigned long long>(runs - failures),
              static_cast<unsigned long long>(runs), static_cast<unsigned long long>(events)) +
              first_failure};
}

Outcome case_study(const Workspace& ws) {
  auto summary_for = [&](ScenarioName name) {
    const auto files = generate({name, 42, 10, kDeltaQ}, ws.dir(std::string("case/") + std::string(to_string(name))));
    const auto config = load_config(files.wiring);
    return summarize(breakdown_requests(collect(config), config.routes));
  };
  const auto noload = summary_for(ScenarioName::RpcNoload);
  const auto background = summary_for(ScenarioName::RpcBackground);
  const auto rows = compare(noload, background);
  auto value = [](const BreakdownSummary& s, bool response, const std::string& c) {
    for (const auto& [name, ps] : response ? s.response : s.request) {
      if (name == c) return ps;
    }
    return -1.0;
  };
  const double bg_excess = value(background, true, "switch0") - value(background, false, "switch0");
  const double req = value(noload, false, "switch0");
  const double resp = value(noload, true, "switch0");
  const double asym = std::abs(resp - req) / std::min(req, resp);
  double delta_switch0 = 0;
  for (const auto& r : rows) {
    if (r.path == "response" && r.component == "switch0") delta_switch0 = r.delta();
  }
  const bool ok = bg_excess >= static_cast<double>(kDeltaQ) && delta_switch0 >= static_cast<double>(kDeltaQ) &&
                  asym <= 0.05;
  return {ok, fmt("background resp-req switch0 %.3f us (>= %.0f), compare delta %.3f us, "
                  "noload asymmetry %.2f%% (<= 5%%)",
                  bg_excess / 1e6, static_cast<double>(kDeltaQ) / 1e6, delta_switch0 / 1e6, asym * 100)};
}

Outcome determinism(const Workspace& ws) {
  const auto files = generate({ScenarioName::RpcBackground, 11, 50}, ws.dir("det/in"));
  const auto config = load_config(files.wiring);
  const auto a = export_bytes(config, ws.dir("det/a"), {Execution::Concurrent, std::nullopt});
  const auto b = export_bytes(config, ws.dir("det/b"), {Execution::Concurrent, std::nullopt});
  const auto c = export_bytes(config, ws.dir("det/c"), {Execution::SingleThreaded, std::nullopt});
  const bool ok = a == b && a == c && !a.first.empty();
  return {ok, fmt("jaeger %zu bytes, jsonl %zu bytes; repeat %s, single-threaded vs concurrent %s",
                  a.first.size(), a.second.size(), a == b ? "identical" : "DIFFERENT",
                  a == c ? "identical" : "DIFFERENT")};
}

Outcome online_offline(const Workspace& ws) {
  const auto in = ws.dir("fifo/in");
  const auto files = generate({ScenarioName::RpcBackground, 12, 10}, in);
  auto config = load_config(files.wiring);
  const auto offline = export_bytes(config, ws.dir("fifo/offline"));

  // Same content through named pipes, written one byte per write().
  const auto pipes = ws.dir("fifo/pipes");
  std::vector<std::pair<fs::path, std::string>> feeds;
  for (auto& src : config.sources) {
    const auto fifo = pipes / src.path.filename();
    if (mkfifo(fifo.c_str(), 0600) != 0) return {false, "mkfifo failed"};
    feeds.emplace_back(fifo, read_file(src.path));
    src.path = fifo;
  }
  config.online = true;
  std::vector<std::thread> writers;
  for (const auto& [fifo, text] : feeds) {
    writers.emplace_back([fifo = fifo, text = text] {
      const int fd = ::open(fifo.c_str(), O_WRONLY);
      if (fd < 0) return;
      for (char ch : text) {
        while (::write(fd, &ch, 1) < 0 && errno == EINTR) {
        }
      }
      ::close(fd);
    });
  }
  std::pair<std::string, std::string> online;
  std::string error;
  try {
    online = export_bytes(config, ws.dir("fifo/online"));
  } catch (const std::exception& e) {
    error = e.what();
  }
  for (auto& w : writers) w.join();
  if (!error.empty()) return {false, "online run failed: " + error};
  const bool ok = online == offline;
  return {ok, fmt("%zu FIFOs, 1-byte writes; jaeger %s, jsonl %s", feeds.size(),
                  online.first == offline.first ? "identical" : "DIFFERENT",
                  online.second == offline.second ? "identical" : "DIFFERENT")};
}

struct LargeRun {
  RunStats stats;
  double seconds = 0;
  std::uint64_t events = 0;
  std::size_t components = 0;
  std::string error;
};

LargeRun large_run(const Workspace& ws) {
  LargeRun r;
  try {
    // Calibrate the request count from a small sample, then generate.
    const auto sample = generate_scenario({ScenarioName::RpcBackground, 2024, 100});
    const auto per_request = static_cast<double>(sample.truth.events.size()) / 100.0;
    const auto n = static_cast<std::uint64_t>(static_cast<double>(kTargetEvents) / per_request) + 1;
    const auto files = generate({ScenarioName::RpcBackground, 2024, n}, ws.dir("large/in"));
    auto config = load_config(files.wiring);
    const auto out = ws.dir("large/out");
    config.exports = {{ExportFormat::Jaeger, out / "trace.json"},
                      {ExportFormat::Jsonl, out / "spans.jsonl"}};
    r.components = config.components.size();
    const auto t0 = Clock::now();
    r.stats = build_and_run(config);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    r.events = r.stats.events_parsed;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

Outcome bounded_memory(const LargeRun& r) {
  if (!r.error.empty()) return {false, r.error};
  const auto& s = r.stats;
  const std::uint64_t open_bound = 4 * r.components;
  const bool ok = r.events >= kTargetEvents && s.peak_open_spans <= open_bound &&
                  s.peak_queue_occupancy <= s.queue_capacity &&
                  s.peak_merge_occupancy <= s.queue_capacity &&
                  s.peak_channel_occupancy <= s.channel_capacity;
  return {ok, fmt("%llu events; peak open spans %llu (<= %llu); queue %llu/%llu; merge %llu/%llu; "
                  "channel %llu/%llu",
                  static_cast<unsigned long long>(r.events), static_cast<unsigned long long>(s.peak_open_spans),
                  static_cast<unsigned long long>(open_bound),
                  static_cast<unsigned long long>(s.peak_queue_occupancy),
                  static_cast<unsigned long long>(s.queue_capacity),
                  static_cast<unsigned long long>(s.peak_merge_occupancy),
                  static_cast<unsigned long long>(s.queue_capacity),
                  static_cast<unsigned long long>(s.peak_channel_occupancy),
                  static_cast<unsigned long long>(s.channel_capacity))};
}

Outcome throughput(const LargeRun& r) {
  if (!r.error.empty() || r.seconds <= 0) return {false, r.error};
  const double rate = static_cast<double>(r.events) / r.seconds;
  return {rate >= 50'000.0, fmt("%.0f events/s (%llu events in %.2f s, %u hardware threads)", rate,
                                static_cast<unsigned long long>(r.events), r.seconds,
                                std::thread::hardware_concurrency())};
}

Outcome robustness(const Workspace& ws) {
  // Drop the single MMIO completion of the first request.
  auto gen = generate_scenario({ScenarioName::RpcNoload, 21, 5});
  const auto drop = corrupt(gen.logs, CorruptMode::drop_first("host0", "MMIO_CW"), 1);
  const auto dir = ws.dir("robust/drop");
  const auto files = write_scenario(gen, dir);
  const int code = run_cli("run --config '" + files.wiring.string() + "'", dir / "stats.txt");
  std::size_t truncated = 0;
  std::size_t spans = 0;
  if (code == 0) {
    for (const auto& s : load_jsonl(dir / "spans.jsonl")) {
      ++spans;
      auto it = s.attrs.find("truncated");
      truncated += it != s.attrs.end() && it->second == AttrValue{true};
    }
  }
  const bool drop_ok = drop.dropped.size() == 1 && code == 0 && truncated == 1;

  // Garble 1% of at least 10k lines.
  auto big = generate_scenario({ScenarioName::RpcNoload, 22, 150});
  std::size_t lines = 0;
  for (const auto& [c, l] : big.logs) lines += l.size();
  const auto garbled = corrupt(big.logs, CorruptMode::garble_lines(0.01), 5);
  const auto gdir = ws.dir("robust/garble");
  const auto gfiles = write_scenario(big, gdir);
  RunStats stats;
  std::string error;
  try {
    stats = build_and_run(load_config(gfiles.wiring));
  } catch (const std::exception& e) {
    error = e.what();
  }
  const bool garble_ok = error.empty() && lines >= 10'000 && stats.parse_errors == garbled.garbled.size() &&
                         stats.traces_emitted > 0 && fs::file_size(gdir / "trace.json") > 20;
  return {drop_ok && garble_ok,
          fmt("drop: exit %d, %zu truncated of %zu spans; garble: %zu lines, %zu garbled, %llu parse "
              "errors, %llu traces exported",
              code, truncated, spans, lines, garbled.garbled.size(),
              static_cast<unsigned long long>(stats.parse_errors),
              static_cast<unsigned long long>(stats.traces_emitted)) +
              (error.empty() ? "" : "; " + error)};
}

Outcome round_trips(const Workspace& ws) {
  // JSONL export -> load -> re-export.
  const auto files = generate({ScenarioName::RpcBackground, 31, 20}, ws.dir("rt/in"));
  const auto bytes = export_bytes(load_config(files.wiring), ws.dir("rt/out")).second;
  std::istringstream in(bytes);
  std::ostringstream again;
  export_jsonl(group_traces(load_jsonl(in)), again);
  const bool jsonl_ok = again.str() == bytes;

  // parse(generate(s)) has no parse errors for every shipped scenario.
  std::uint64_t errors = 0;
  std::uint64_t events = 0;
  for (auto name : {ScenarioName::RpcNoload, ScenarioName::RpcBackground}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto g = generate_scenario({name, seed, 30});
      for (const auto& src : g.config.sources) {
        for (const auto& line : g.logs.at(src.component.id)) {
          const auto o = parse_line(src.dialect, line, src.component);
          errors += std::holds_alternative<ParseError>(o);
          events += std::holds_alternative<Event>(o);
        }
      }
    }
  }
  return {jsonl_ok && errors == 0 && events > 0,
          fmt("jsonl re-export %s (%zu bytes); %llu events parsed, %llu parse errors",
              jsonl_ok ? "identical" : "DIFFERENT", bytes.size(), static_cast<unsigned long long>(events),
              static_cast<unsigned long long>(errors))};
}

}  // namespace

int main() {
  Workspace ws;
  std::optional<LargeRun> large;
  auto large_once = [&]() -> const LargeRun& {
    if (!large) large = large_run(ws);
    return *large;
  };
  const std::vector<Criterion> criteria = {
      {1, "taxonomy fidelity", false, 1.0, taxonomy},
      {2, "oracle trace reconstruction", false, 30.0, [&] { return oracle(ws); }},
      {3, "case-study shape", false, 10.0, [&] { return case_study(ws); }},
      {4, "determinism", false, 0, [&] { return determinism(ws); }},
      {5, "online/offline equivalence", false, 0, [&] { return online_offline(ws); }},
      {6, "bounded memory", false, 60.0, [&] { return bounded_memory(large_once()); }},
      {7, "robustness", false, 0, [&] { return robustness(ws); }},
      {8, "throughput (soft)", true, 0, [&] { return throughput(large_once()); }},
      {9, "round-trips", false, 0, [&] { return round_trips(ws); }},
  };
  int hard_failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    bool pass = o.pass;
    std::string detail = o.detail;
    if (c.budget_s > 0 && secs > c.budget_s) {
      pass = false;
      detail += fmt("; exceeded %.0f s budget", c.budget_s);
    }
    const char* tag = pass ? "PASS" : (c.soft ? "WARN" : "FAIL");
    std::printf("[%s] %d %s: %s (%.2f s)\n", tag, c.number, c.title, detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass && !c.soft) ++hard_failures;
  }
  std::printf("%s: %d hard criteria failed\n", hard_failures == 0 ? "OK" : "FAILED", hard_failures);
  return hard_failures == 0 ? 0 : 1;
}
