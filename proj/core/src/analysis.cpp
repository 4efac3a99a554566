#include "spanweave/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "spanweave/errors.hpp"

namespace spanweave {
namespace {

using ojson = nlohmann::ordered_json;

bool is_truncated(const Span& span) {
  auto it = span.attrs.find("truncated");
  return it != span.attrs.end() && std::holds_alternative<bool>(it->second) &&
         std::get<bool>(it->second);
}

const Span* root_of(const Trace& trace) {
  const Span* root = nullptr;
  for (const auto& span : trace) {
    if (span.parent_span_id) continue;
    if (root == nullptr || span.start_ts < root->start_ts ||
        (span.start_ts == root->start_ts && span.span_id < root->span_id)) {
      root = &span;
    }
  }
  return root;
}

const RouteSpec* route_between(const std::vector<RouteSpec>& routes, const std::string& from,
                               const std::string& to) {
  for (const auto& r : routes) {
    if (!r.hops.empty() && r.hops.front() == from && (to.empty() || r.hops.back() == to)) return &r;
  }
  return nullptr;
}

/// Row order: route hops first (when a route is known), then remaining
/// components by first span start.
std::vector<std::string> path_order(const std::vector<const Span*>& spans, const RouteSpec* route) {
  std::map<std::string, std::pair<SimTimestamp, SpanId>> first;
  for (const Span* s : spans) {
    auto [it, fresh] = first.try_emplace(s->component.id, s->start_ts, s->span_id);
    if (!fresh) it->second = std::min(it->second, std::make_pair(s->start_ts, s->span_id));
  }
  std::vector<std::string> order;
  if (route != nullptr) {
    for (const auto& hop : route->hops) {
      if (first.erase(hop) > 0) order.push_back(hop);
    }
  }
  std::vector<std::pair<std::pair<SimTimestamp, SpanId>, std::string>> rest;
  for (auto& [component, key] : first) rest.emplace_back(key, component);
  std::sort(rest.begin(), rest.end());
  for (auto& [key, component] : rest) order.push_back(std::move(component));
  return order;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::uint64_t PathBreakdown::total() const {
  std::uint64_t sum = 0;
  for (const auto& [component, ps] : dwell) sum += ps;
  return sum;
}

std::optional<std::uint64_t> PathBreakdown::of(std::string_view component) const {
  for (const auto& [c, ps] : dwell) {
    if (c == component) return ps;
  }
  return std::nullopt;
}

bool is_request_trace(const Trace& trace) {
  const Span* root = root_of(trace);
  return root != nullptr && root->kind == SpanKind::HostSyscall;
}

Breakdown breakdown(const Trace& trace, const std::vector<RouteSpec>& routes) {
  const Span* root = root_of(trace);
  if (root == nullptr) throw Error(ErrorCode::IncompleteTrace, "trace has no root span");

  std::unordered_map<SpanId, const Span*> by_id;
  for (const auto& span : trace) by_id.emplace(span.span_id, &span);
  for (const auto& span : trace) {
    if (is_truncated(span)) {
      throw Error(ErrorCode::IncompleteTrace, "trace " + span.trace_id.to_hex() + ": span " +
                                                  span_id_hex(span.span_id) + " is truncated");
    }
    if (span.parent_span_id && !by_id.contains(*span.parent_span_id)) {
      throw Error(ErrorCode::IncompleteTrace, "trace " + span.trace_id.to_hex() + ": span " +
                                                  span_id_hex(span.span_id) +
                                                  " references a missing parent");
    }
  }

  Breakdown out;
  out.trace_id = root->trace_id;
  out.source = root->component.id;
  out.start = root->start_ts;
  out.end = root->end_ts;
  for (const auto& span : trace) out.end = std::max(out.end, span.end_ts);

  // Depth via the parent chain, memoized.
  std::unordered_map<SpanId, std::uint32_t> depth;
  std::function<std::uint32_t(const Span*)> depth_of = [&](const Span* s) -> std::uint32_t {
    if (auto it = depth.find(s->span_id); it != depth.end()) return it->second;
    const std::uint32_t d = s->parent_span_id ? depth_of(by_id.at(*s->parent_span_id)) + 1 : 0;
    depth.emplace(s->span_id, d);
    return d;
  };

  // Destination host and its first syscall.
  std::string destination;
  if (const RouteSpec* r = route_between(routes, out.source, {}); r != nullptr) {
    destination = r->hops.back();
  }
  const Span* served = nullptr;
  for (const auto& span : trace) {
    if (span.kind != SpanKind::HostSyscall || &span == root) continue;
    if (destination.empty() ? span.component.id == out.source : span.component.id != destination) {
      continue;
    }
    if (served == nullptr || span.start_ts < served->start_ts ||
        (span.start_ts == served->start_ts && span.span_id < served->span_id)) {
      served = &span;
    }
  }
  if (served != nullptr) out.destination = served->component.id;

  std::set<SpanId> response;
  if (served != nullptr) {
    for (const auto& span : trace) {
      for (const Span* s = &span;; s = by_id.at(*s->parent_span_id)) {
        if (s == served) {
          response.insert(span.span_id);
          break;
        }
        if (!s->parent_span_id) break;
      }
    }
  }

  // Sweep the extent; each elementary interval goes to the deepest active span.
  struct Mark {
    SimTimestamp at;
    bool open;
    const Span* span;
  };
  std::vector<Mark> marks;
  for (const auto& span : trace) {
    if (span.end_ts <= span.start_ts) continue;
    marks.push_back({span.start_ts, true, &span});
    marks.push_back({span.end_ts, false, &span});
  }
  std::sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.at < b.at; });
  using Key = std::tuple<std::uint32_t, SimTimestamp, SpanId>;
  std::map<Key, const Span*> active;
  std::map<std::string, std::uint64_t> request_ps;
  std::map<std::string, std::uint64_t> response_ps;
  SimTimestamp cursor = out.start;
  auto charge = [&](SimTimestamp until) {
    if (until <= cursor) return;
    const std::uint64_t len = until.ticks - cursor.ticks;
    if (active.empty()) {
      out.remainder += len;
    } else {
      const Span* top = active.rbegin()->second;
      (response.contains(top->span_id) ? response_ps : request_ps)[top->component.id] += len;
    }
    cursor = until;
  };
  for (std::size_t i = 0; i < marks.size();) {
    const SimTimestamp at = marks[i].at;
    charge(at);
    for (; i < marks.size() && marks[i].at == at; ++i) {
      const Span* s = marks[i].span;
      const Key key{depth_of(s), s->start_ts, s->span_id};
      if (marks[i].open) {
        active.emplace(key, s);
      } else {
        active.erase(key);
      }
    }
  }
  charge(out.end);

  std::vector<const Span*> request_spans;
  std::vector<const Span*> response_spans;
  for (const auto& span : trace) {
    (response.contains(span.span_id) ? response_spans : request_spans).push_back(&span);
  }
  const RouteSpec* forward = route_between(routes, out.source, out.destination);
  const RouteSpec* backward =
      out.destination.empty() ? nullptr : route_between(routes, out.destination, out.source);
  for (auto& c : path_order(request_spans, forward)) {
    const std::uint64_t ps = request_ps[c];
    out.request.dwell.emplace_back(std::move(c), ps);
  }
  for (auto& c : path_order(response_spans, backward)) {
    const std::uint64_t ps = response_ps[c];
    out.response.dwell.emplace_back(std::move(c), ps);
  }
  return out;
}

Breakdown breakdown(const std::vector<Trace>& traces, TraceId id,
                    const std::vector<RouteSpec>& routes) {
  for (const auto& trace : traces) {
    if (!trace.empty() && trace.front().trace_id == id) return breakdown(trace, routes);
  }
  throw Error(ErrorCode::TraceNotFound, "no trace with id " + id.to_hex());
}

std::vector<Breakdown> breakdown_requests(const std::vector<Trace>& traces,
                                          const std::vector<RouteSpec>& routes) {
  std::vector<Breakdown> out;
  for (const auto& trace : traces) {
    if (is_request_trace(trace)) out.push_back(breakdown(trace, routes));
  }
  return out;
}

BreakdownSummary summarize(const std::vector<Breakdown>& breakdowns) {
  if (breakdowns.empty()) throw Error(ErrorCode::TraceNotFound, "no request traces to summarize");
  BreakdownSummary out;
  out.traces = breakdowns.size();
  auto names = [](const PathBreakdown& p) {
    std::vector<std::string> n;
    for (const auto& [c, ps] : p.dwell) n.push_back(c);
    return n;
  };
  const auto& first = breakdowns.front();
  const auto req_names = names(first.request);
  const auto resp_names = names(first.response);
  std::vector<double> req(req_names.size());
  std::vector<double> resp(resp_names.size());
  const double n = static_cast<double>(breakdowns.size());
  for (const auto& b : breakdowns) {
    if (names(b.request) != req_names || names(b.response) != resp_names) {
      throw Error(ErrorCode::Config, "trace " + b.trace_id.to_hex() +
                                         " crosses different components than trace " +
                                         first.trace_id.to_hex());
    }
    for (std::size_t i = 0; i < req.size(); ++i) req[i] += static_cast<double>(b.request.dwell[i].second) / n;
    for (std::size_t i = 0; i < resp.size(); ++i) {
      resp[i] += static_cast<double>(b.response.dwell[i].second) / n;
    }
    out.remainder += static_cast<double>(b.remainder) / n;
    out.duration += static_cast<double>(b.duration()) / n;
  }
  for (std::size_t i = 0; i < req.size(); ++i) out.request.emplace_back(req_names[i], req[i]);
  for (std::size_t i = 0; i < resp.size(); ++i) out.response.emplace_back(resp_names[i], resp[i]);
  return out;
}

double DeltaRow::relative() const {
  const double base = std::min(std::fabs(a), std::fabs(b));
  if (a == b) return 0.0;
  if (base == 0.0) return INFINITY;
  return delta() / base;
}

std::vector<DeltaRow> compare(const BreakdownSummary& a, const BreakdownSummary& b) {
  auto rows_for = [](const char* path, const auto& pa, const auto& pb, std::vector<DeltaRow>& rows) {
    std::map<std::string, double> other(pb.begin(), pb.end());
    std::set<std::string> seen;
    for (const auto& [c, v] : pa) {
      auto it = other.find(c);
      if (it == other.end()) {
        throw Error(ErrorCode::Config,
                    std::string(path) + " path: component '" + c + "' missing from the second input");
      }
      rows.push_back({path, c, v, it->second});
      seen.insert(c);
    }
    for (const auto& [c, v] : pb) {
      if (!seen.contains(c)) {
        throw Error(ErrorCode::Config,
                    std::string(path) + " path: component '" + c + "' missing from the first input");
      }
    }
  };
  std::vector<DeltaRow> rows;
  rows_for("request", a.request, b.request, rows);
  rows_for("response", a.response, b.response, rows);
  rows.push_back({"remainder", "", a.remainder, b.remainder});
  rows.push_back({"total", "", a.duration, b.duration});
  return rows;
}

std::string breakdown_json(const Breakdown& b) {
  ojson j;
  j["trace_id"] = b.trace_id.to_hex();
  j["source"] = b.source;
  j["destination"] = b.destination;
  j["start_ps"] = b.start.ticks;
  j["duration_ps"] = b.duration();
  auto path = [](const PathBreakdown& p) {
    ojson rows = ojson::array();
    for (const auto& [c, ps] : p.dwell) rows.push_back({{"component", c}, {"dwell_ps", ps}});
    return rows;
  };
  j["request"] = path(b.request);
  j["response"] = path(b.response);
  j["remainder_ps"] = b.remainder;
  return j.dump();
}

std::string summary_json(const BreakdownSummary& s) {
  ojson j;
  j["traces"] = s.traces;
  auto path = [](const auto& p) {
    ojson rows = ojson::array();
    for (const auto& [c, ps] : p) rows.push_back({{"component", c}, {"mean_dwell_ps", ps}});
    return rows;
  };
  j["request"] = path(s.request);
  j["response"] = path(s.response);
  j["mean_remainder_ps"] = s.remainder;
  j["mean_duration_ps"] = s.duration;
  return j.dump();
}

std::string compare_json(const std::vector<DeltaRow>& rows) {
  ojson out = ojson::array();
  for (const auto& r : rows) {
    ojson j;
    j["path"] = r.path;
    j["component"] = r.component;
    j["a_ps"] = r.a;
    j["b_ps"] = r.b;
    j["delta_ps"] = r.delta();
    const double rel = r.relative();
    if (std::isfinite(rel)) {
      j["relative"] = rel;
    } else {
      j["relative"] = nullptr;
    }
    out.push_back(std::move(j));
  }
  return out.dump();
}

std::string compare_table(const std::vector<DeltaRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-10s %14s %14s %14s %9s\n", "path", "component",
                "a_us", "b_us", "delta_us", "rel");
  out += line;
  for (const auto& r : rows) {
    const double rel = r.relative();
    const std::string rel_text = std::isfinite(rel) ? fixed(rel * 100.0, 1) + "%" : "n/a";
    std::snprintf(line, sizeof line, "%-10s %-10s %14s %14s %14s %9s\n", r.path.c_str(),
                  r.component.empty() ? "-" : r.component.c_str(), fixed(r.a / 1e6, 3).c_str(),
                  fixed(r.b / 1e6, 3).c_str(), fixed(r.delta() / 1e6, 3).c_str(), rel_text.c_str());
    out += line;
  }
  return out;
}

}  // namespace spanweave
