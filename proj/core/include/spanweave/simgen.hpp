#pragma once

// Deterministic synthetic scenarios: dialect-exact logs for a two-host,
// two-NIC, two-switch topology plus a ground-truth sidecar recording the
// true span/trace structure.
//
// Randomness: every component (and the workload itself) draws from its own
// std::mt19937_64 seeded with mix64(scenario seed ^ fnv1a64(stream name)).
// Bounded draws use rejection sampling on the raw 64-bit output, so streams
// are stable across standard libraries and adding a component does not
// shift any other component's draws.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spanweave/config.hpp"
#include "spanweave/event_model.hpp"
#include "spanweave/exporter.hpp"

namespace spanweave {

enum class ScenarioName : std::uint8_t { RpcNoload, RpcBackground };

std::string_view to_string(ScenarioName name);
std::optional<ScenarioName> scenario_from_string(std::string_view text);

inline constexpr std::uint64_t kDefaultQueueingDelta = 50 * kPicosPerMicro;
inline constexpr std::uint64_t kMaxRequests = 10'000'000;

struct Scenario {
  ScenarioName name = ScenarioName::RpcNoload;
  std::uint64_t seed = 0;
  std::uint64_t n_requests = 1;
  /// Extra switch0 queueing on the response path (background scenario).
  std::uint64_t queueing_delta_ps = kDefaultQueueingDelta;
  std::uint64_t window_ps = kDefaultCausalityWindowPs;
};

/// Throws Error{Config} for out-of-range parameters.
void validate_scenario(const Scenario& scenario);

/// Seeded generator with library-independent bounded draws.
class StreamRng {
 public:
  StreamRng(std::uint64_t scenario_seed, std::string_view stream);
  /// Uniform on [lo, hi].
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
  double unit();  // [0, 1)

 private:
  std::mt19937_64 engine_;
};

struct TruthTrace {
  std::size_t id = 0;
  std::string label;
};

struct TruthSpan {
  std::size_t id = 0;
  std::size_t trace = 0;
  std::string component;
  SpanKind kind = SpanKind::HostSyscall;
  std::string label;
  std::optional<std::size_t> parent;
};

struct TruthEvent {
  std::string component;
  std::uint64_t seq = 0;
  std::size_t span = 0;
};

/// One direction of one request. Segments telescope: the dwell of every
/// component plus every link delay equals e2e_ps.
struct PathTiming {
  std::uint64_t request = 0;
  bool response = false;
  std::vector<std::pair<std::string, std::uint64_t>> dwell;
  std::vector<std::pair<std::string, std::uint64_t>> links;
  std::uint64_t e2e_ps = 0;
};

struct PacketTruth {
  std::uint64_t pkt = 0;
  std::string role;  // request | response | background
  std::uint64_t queue_delay_ps = 0;
};

struct GroundTruth {
  Scenario scenario;
  std::vector<TruthTrace> traces;
  std::vector<TruthSpan> spans;
  std::vector<TruthEvent> events;
  std::vector<PathTiming> timings;
  std::vector<PacketTruth> packets;

  /// Header `{"spanweave_truth":1,...}` then one record per line.
  std::string to_jsonl() const;
  static GroundTruth parse(std::string_view text);
  static GroundTruth load(const std::filesystem::path& path);

  std::map<std::string, std::uint64_t> events_per_component() const;
};

struct GeneratedScenario {
  Scenario scenario;
  /// Log lines per component id, in file order, without trailing newlines.
  std::map<std::string, std::vector<std::string>> logs;
  GroundTruth truth;
  /// Wiring for the logs, with paths relative to the output directory.
  WiringConfig config;
  /// nm-style symbol table for the host call targets.
  std::string symbols;
};

GeneratedScenario generate_scenario(const Scenario& scenario);

struct GeneratedFiles {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> logs;
  std::filesystem::path truth;
  std::filesystem::path wiring;
  std::filesystem::path symbols;
};

/// Writes `<component>.log` per component, truth.jsonl, wiring.json and
/// host.sym into `dir`, each atomically.
GeneratedFiles write_scenario(const GeneratedScenario& generated, const std::filesystem::path& dir);
GeneratedFiles generate(const Scenario& scenario, const std::filesystem::path& dir);

std::string log_file_name(std::string_view component);

// -- corruption fixtures ----------------------------------------------------

struct CorruptMode {
  enum class Kind : std::uint8_t { DropLines, GarbleLines, DropFirstMatching };
  Kind kind = Kind::DropLines;
  double p = 0.0;
  std::string component;  // DropFirstMatching: restrict to this log (empty = any)
  std::string pattern;    // DropFirstMatching: substring to look for

  static CorruptMode drop_lines(double p) { return {Kind::DropLines, p, {}, {}}; }
  static CorruptMode garble_lines(double p) { return {Kind::GarbleLines, p, {}, {}}; }
  static CorruptMode drop_first(std::string component, std::string pattern) {
    return {Kind::DropFirstMatching, 0.0, std::move(component), std::move(pattern)};
  }
};

struct CorruptedLine {
  std::string component;
  std::size_t line_index = 0;  // index in the original log
  std::string original;
};

struct CorruptionReport {
  std::vector<CorruptedLine> dropped;
  std::vector<CorruptedLine> garbled;
};

/// Only event lines (those carrying key=value attributes) are touched.
/// Garbling replaces the first attribute value with "@@", which every
/// dialect rejects.
CorruptionReport corrupt(std::map<std::string, std::vector<std::string>>& logs,
                         const CorruptMode& mode, std::uint64_t seed);

// -- oracle comparison --------------------------------------------------------

struct TruthDiff {
  std::uint64_t truth_events = 0;
  std::uint64_t truth_spans = 0;
  std::uint64_t reconstructed_spans = 0;
  std::uint64_t missing_events = 0;  // truth events absent from every span
  std::uint64_t extra_events = 0;    // reconstructed events unknown to truth
  std::uint64_t span_mismatches = 0;   // event grouped into the wrong span
  std::uint64_t trace_mismatches = 0;  // event placed in the wrong trace
  std::uint64_t edge_mismatches = 0;   // span parent differs
  std::vector<std::string> samples;    // first few human-readable mismatches

  bool exact() const {
    return missing_events == 0 && extra_events == 0 && span_mismatches == 0 &&
           trace_mismatches == 0 && edge_mismatches == 0 && truth_spans == reconstructed_spans;
  }
};

/// Spans are identified by their first event (component, seq) on both
/// sides, so the check is independent of id assignment.
TruthDiff compare_with_truth(const GroundTruth& truth, const std::vector<Trace>& traces);

}  // namespace spanweave
