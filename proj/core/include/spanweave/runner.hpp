#pragma once

// Builds the stage graph for a wiring config and runs it to completion:
// one producer -> actors -> weaver chain per component, context channels
// between neighbouring weavers, and a single exporter fed by a merge queue.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spanweave/config.hpp"
#include "spanweave/exporter.hpp"

namespace spanweave {

struct ComponentStats {
  std::uint64_t lines = 0;
  std::uint64_t events = 0;
  std::uint64_t skipped = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t spans = 0;
};

struct RunStats {
  std::uint64_t events_parsed = 0;
  std::uint64_t events_woven = 0;
  std::uint64_t lines = 0;
  std::uint64_t skipped = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t spans_emitted = 0;
  std::uint64_t traces_emitted = 0;
  std::uint64_t contexts_pushed = 0;
  std::uint64_t contexts_matched = 0;
  std::uint64_t contexts_unmatched = 0;
  std::uint64_t unmatched_spans = 0;
  std::uint64_t unmatched_completions = 0;
  std::uint64_t truncated_spans = 0;
  std::uint64_t key_mismatches = 0;
  std::uint64_t external_roots = 0;
  std::uint64_t peak_open_spans = 0;  // sum of per-weaver peaks
  std::uint64_t peak_queue_occupancy = 0;
  std::uint64_t peak_channel_occupancy = 0;
  std::uint64_t peak_merge_occupancy = 0;
  std::uint64_t queue_capacity = 0;
  std::uint64_t channel_capacity = 0;
  std::map<std::string, ComponentStats> components;
  std::map<std::string, std::vector<ParseError>> errors;  // first few per component
};

std::string run_stats_json(const RunStats& stats);

struct RunControl {
  /// Overrides options.execution when set.
  std::optional<Execution> execution;
  /// Single-threaded mode only: visit stages in a seeded random order each
  /// round instead of round-robin.
  std::optional<std::uint64_t> shuffle_seed;
};

using TraceSink = std::function<void(Trace&&)>;

/// Runs the graph and hands every finished trace to `sink`.
RunStats run_graph(const WiringConfig& config, const TraceSink& sink, const RunControl& control = {});

/// Runs the graph and writes every configured export atomically. Exports
/// are removed if the run fails.
RunStats build_and_run(const WiringConfig& config, const RunControl& control = {});

/// Which execution mode Auto resolves to for this config.
Execution resolve_execution(const WiringConfig& config, std::optional<Execution> requested);

}  // namespace spanweave
