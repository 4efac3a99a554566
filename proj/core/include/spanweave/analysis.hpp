#pragma once

// Per-component latency breakdown of request traces and two-scenario
// comparison.
//
// Every elementary interval of a trace's extent is charged to the deepest
// span active in it (ties: later start, then larger span id), so nested spans
// are never double counted. Intervals covered by no span form the wire/idle
// remainder. The response path is the subtree of the first syscall on the
// destination host; everything else is the request path.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spanweave/config.hpp"
#include "spanweave/event_model.hpp"
#include "spanweave/exporter.hpp"

namespace spanweave {

struct PathBreakdown {
  /// Components in path order with the time charged to each.
  std::vector<std::pair<std::string, std::uint64_t>> dwell;

  std::uint64_t total() const;
  std::optional<std::uint64_t> of(std::string_view component) const;
};

struct Breakdown {
  TraceId trace_id;
  std::string source;       // component of the root span
  std::string destination;  // host that served the request, empty if none
  SimTimestamp start;
  SimTimestamp end;
  PathBreakdown request;
  PathBreakdown response;
  std::uint64_t remainder = 0;

  /// Trace extent: latest span end minus root start. Always equals
  /// request.total() + response.total() + remainder.
  std::uint64_t duration() const { return end.ticks - start.ticks; }
};

/// Throws Error{IncompleteTrace} when a span is truncated or references a
/// parent missing from the trace. `routes` (optional) fix the destination
/// host and the row order.
Breakdown breakdown(const Trace& trace, const std::vector<RouteSpec>& routes = {});

/// Throws Error{TraceNotFound} when no trace has the id.
Breakdown breakdown(const std::vector<Trace>& traces, TraceId id,
                    const std::vector<RouteSpec>& routes = {});

/// Request traces only: those rooted at a host syscall.
bool is_request_trace(const Trace& trace);
std::vector<Breakdown> breakdown_requests(const std::vector<Trace>& traces,
                                          const std::vector<RouteSpec>& routes = {});

/// Mean over traces, in picoseconds.
struct BreakdownSummary {
  std::uint64_t traces = 0;
  std::vector<std::pair<std::string, double>> request;
  std::vector<std::pair<std::string, double>> response;
  double remainder = 0;
  double duration = 0;
};

/// Throws Error{TraceNotFound} when `breakdowns` is empty and
/// Error{Config} when the traces disagree on their path components.
BreakdownSummary summarize(const std::vector<Breakdown>& breakdowns);

struct DeltaRow {
  std::string path;  // request | response | remainder | total
  std::string component;
  double a = 0;
  double b = 0;

  double delta() const { return b - a; }
  /// delta relative to the smaller side; 0 when both are zero.
  double relative() const;
};

/// Per-component B minus A. Throws Error{Config} when the two summaries do
/// not cover the same components on each path.
std::vector<DeltaRow> compare(const BreakdownSummary& a, const BreakdownSummary& b);

std::string breakdown_json(const Breakdown& breakdown);
std::string summary_json(const BreakdownSummary& summary);
std::string compare_json(const std::vector<DeltaRow>& rows);
std::string compare_table(const std::vector<DeltaRow>& rows);

}  // namespace spanweave
