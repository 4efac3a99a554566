#include <gtest/gtest.h>

#include <random>

#include "spanweave/analysis.hpp"
#include "spanweave/errors.hpp"
#include "spanweave/simgen.hpp"
#include "test_util.hpp"

using namespace spanweave;
using namespace spanweave::testing;

namespace {

Span make_span(SpanId id, std::optional<SpanId> parent, SpanKind kind, const char* component,
               std::uint64_t start, std::uint64_t end) {
  Span s;
  s.span_id = id;
  s.parent_span_id = parent;
  s.trace_id = {0, 1};
  s.kind = kind;
  s.component = {component, component_type_of(kind)};
  s.start_ts = SimTimestamp{start};
  s.end_ts = SimTimestamp{end};
  return s;
}

std::vector<Trace> scenario_traces(const Scenario& s, std::vector<RouteSpec>* routes = nullptr) {
  TempDir dir;
  const auto files = generate(s, dir.path());
  const auto config = load_config(files.wiring);
  if (routes) *routes = config.routes;
  return run_collect(config).traces;
}

}  // namespace

TEST(Breakdown, HandComputedSelfTime) {
  // host0 syscall [0,100] with child mmio [10,30]; nic span [50,200]
  // parented to the mmio; host1 syscall [250,300] as the served request,
  // with a child on nic1 [260,400]. Gap [200,250] is remainder.
  Trace t = {
      make_span(1, std::nullopt, SpanKind::HostSyscall, "host0", 0, 100),
      make_span(2, 1, SpanKind::HostMmio, "host0", 10, 30),
      make_span(3, 2, SpanKind::NicMmioSpan, "nic0", 50, 200),
      make_span(4, 3, SpanKind::HostSyscall, "host1", 250, 300),
      make_span(5, 4, SpanKind::NicTxSpan, "nic1", 260, 400),
  };
  const auto b = breakdown(t);
  EXPECT_EQ(b.destination, "host1");
  // host0 owns [0,50); nic0 owns [50,200) (deeper than the syscall on [50,100)).
  EXPECT_EQ(b.request.of("host0"), 50u);
  EXPECT_EQ(b.request.of("nic0"), 150u);
  // host1 owns [250,260); nic1 owns [260,400).
  EXPECT_EQ(b.response.of("host1"), 10u);
  EXPECT_EQ(b.response.of("nic1"), 140u);
  EXPECT_EQ(b.remainder, 50u);
  EXPECT_EQ(b.duration(), 400u);
  EXPECT_EQ(b.request.total() + b.response.total() + b.remainder, b.duration());
}

TEST(Breakdown, Errors) {
  Trace t = {make_span(1, std::nullopt, SpanKind::HostSyscall, "host0", 0, 100),
             make_span(2, 1, SpanKind::HostMmio, "host0", 10, 30)};
  t[1].attrs["truncated"] = true;
  try {
    breakdown(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompleteTrace);
  }
  t[1].attrs.clear();
  t[1].parent_span_id = 99;
  EXPECT_THROW(breakdown(t), Error);
  try {
    breakdown(std::vector<Trace>{}, TraceId{1, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TraceNotFound);
  }
}

TEST(Breakdown, ConservationOnEveryGeneratedTrace) {
  for (auto name : {ScenarioName::RpcNoload, ScenarioName::RpcBackground}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      std::vector<RouteSpec> routes;
      const auto traces = scenario_traces({name, seed, 8}, &routes);
      for (const auto& t : traces) {
        const auto b = breakdown(t, routes);
        EXPECT_EQ(b.request.total() + b.response.total() + b.remainder, b.duration());
      }
    }
  }
}

TEST(Breakdown, RequestPathFollowsRouteOrder) {
  std::vector<RouteSpec> routes;
  const auto traces = scenario_traces({ScenarioName::RpcNoload, 42, 1}, &routes);
  const auto all = breakdown_requests(traces, routes);
  ASSERT_EQ(all.size(), 1u);
  std::vector<std::string> req;
  std::vector<std::string> resp;
  for (const auto& [c, ps] : all[0].request.dwell) req.push_back(c);
  for (const auto& [c, ps] : all[0].response.dwell) resp.push_back(c);
  EXPECT_EQ(req, (std::vector<std::string>{"host0", "nic0", "switch0", "switch1", "nic1", "host1"}));
  EXPECT_EQ(resp, (std::vector<std::string>{"host1", "nic1", "switch1", "switch0", "nic0", "host0"}));
}

TEST(Breakdown, InjectedQueueingShowsOnResponseSwitch0) {
  const std::uint64_t dq = 50 * kPicosPerMicro;
  const auto noload = breakdown_requests(scenario_traces({ScenarioName::RpcNoload, 42, 1}));
  const auto bg = breakdown_requests(scenario_traces({ScenarioName::RpcBackground, 42, 1, dq}));
  ASSERT_EQ(noload.size(), 1u);
  ASSERT_EQ(bg.size(), 1u);
  EXPECT_GE(*bg[0].response.of("switch0") - *bg[0].request.of("switch0"), dq);
  const double a = static_cast<double>(*noload[0].request.of("switch0"));
  const double b = static_cast<double>(*noload[0].response.of("switch0"));
  EXPECT_LE(std::abs(a - b), 0.05 * std::min(a, b));
}

TEST(Compare, IdentityIsZero) {
  const auto s = summarize(breakdown_requests(scenario_traces({ScenarioName::RpcNoload, 5, 4})));
  for (const auto& row : compare(s, s)) {
    EXPECT_EQ(row.delta(), 0.0);
    EXPECT_EQ(row.relative(), 0.0);
  }
}

TEST(Compare, MismatchedTopologiesAreConfigErrors) {
  BreakdownSummary a;
  a.traces = 1;
  a.request = {{"host0", 1.0}, {"switch0", 2.0}};
  BreakdownSummary b = a;
  b.request = {{"host0", 1.0}, {"switch9", 2.0}};
  try {
    compare(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
}

TEST(Compare, NoloadVersusBackground) {
  const std::uint64_t dq = 50 * kPicosPerMicro;
  const auto a = summarize(breakdown_requests(scenario_traces({ScenarioName::RpcNoload, 42, 10})));
  const auto b = summarize(breakdown_requests(scenario_traces({ScenarioName::RpcBackground, 42, 10, dq})));
  for (const auto& row : compare(a, b)) {
    if (row.path == "response" && row.component == "switch0") {
      EXPECT_GE(row.delta(), static_cast<double>(dq));
    }
    if (row.component == "host0" || row.component == "host1") {
      EXPECT_LE(std::abs(row.relative()), 0.05) << row.path << " " << row.component;
    }
  }
  EXPECT_NE(compare_table(compare(a, b)).find("switch0"), std::string::npos);
}

TEST(Summarize, EmptyIsTraceNotFound) {
  try {
    summarize(std::vector<Breakdown>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TraceNotFound);
  }
}
