#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spanweave/errors.hpp"
#include "spanweave/simgen.hpp"
#include "test_util.hpp"

using namespace spanweave;
using namespace spanweave::testing;

#ifndef SPANWEAVE_FIXTURE_DIR
#error "SPANWEAVE_FIXTURE_DIR must be defined"
#endif

namespace {

std::vector<Trace> host_two_span_traces() {
  static TempDir dir;
  return run_logs(dir, kHostOnlyConfig,
                  {{"host0.log",
                    "100: cpu0: SYSCALL num=44 name=sendto\n"
                    "110: cpu0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3\n"
                    "130: cpu0: MMIO_CW id=3\n"
                    "150: cpu0: SYSRET num=44 ret=90\n"}})
      .traces;
}

std::string jaeger_of(const std::vector<Trace>& traces) {
  std::ostringstream out;
  export_jaeger(traces, out);
  return out.str();
}

std::string jsonl_of(const std::vector<Trace>& traces) {
  std::ostringstream out;
  export_jsonl(traces, out);
  return out.str();
}

/// Random but well-formed span for round-trip properties.
Span random_span(std::mt19937_64& rng) {
  static const char* kIdents[] = {"sendto", "a", "x_1", "fn.name", "q-z"};
  Span s;
  s.span_id = rng() | 1;
  s.trace_id = {rng(), rng() | 1};
  if (rng() % 2) s.parent_span_id = rng() | 1;
  const auto type = static_cast<ComponentType>(rng() % 3);
  const auto kinds = span_kind_registry(type);
  s.kind = kinds[rng() % kinds.size()];
  s.component = {"comp" + std::to_string(rng() % 4), type};
  s.start_ts = SimTimestamp{rng() % 1'000'000'000'000ULL};
  s.end_ts = SimTimestamp{s.start_ts.ticks + rng() % 5'000'000};
  const auto events = kind_registry(type);
  const int n = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    Event e;
    e.seq = rng() % 100000;
    e.ts = SimTimestamp{s.start_ts.ticks + (s.end_ts.ticks - s.start_ts.ticks) * i / n};
    e.component = s.component;
    e.kind = events[rng() % events.size()];
    for (int k = 0; k < static_cast<int>(rng() % 4); ++k) {
      const std::string key = "k" + std::to_string(k);
      switch (rng() % 4) {
        case 0: e.attrs[key] = rng(); break;
        case 1: e.attrs[key] = Hex{rng()}; break;
        case 2: e.attrs[key] = std::string(kIdents[rng() % 5]); break;
        default: e.attrs[key] = rng() % 2 == 0; break;
      }
    }
    s.events.push_back(std::move(e));
  }
  if (rng() % 2) s.attrs["truncated"] = true;
  if (rng() % 2) s.attrs["name"] = std::string("sendto");
  if (rng() % 2) s.attrs["addr"] = Hex{rng()};
  return s;
}

}  // namespace

TEST(Jaeger, EmptyInput) { EXPECT_EQ(jaeger_of({}), R"({"data":[]})"); }

TEST(Jaeger, HostExampleMatchesFixture) {
  const auto text = jaeger_of(host_two_span_traces());
  const auto fixture = read_text(std::filesystem::path(SPANWEAVE_FIXTURE_DIR) / "host_two_span.jaeger.json");
  EXPECT_EQ(text + "\n", fixture);
}

TEST(Jaeger, ChildReferencesParentAndSubMicrosecondClamp) {
  const auto doc = nlohmann::json::parse(jaeger_of(host_two_span_traces()));
  ASSERT_EQ(doc["data"].size(), 1u);
  const auto& spans = doc["data"][0]["spans"];
  ASSERT_EQ(spans.size(), 2u);
  const auto& root = spans[0];
  const auto& child = spans[1];
  EXPECT_TRUE(root["references"].empty());
  ASSERT_EQ(child["references"].size(), 1u);
  EXPECT_EQ(child["references"][0]["refType"], "CHILD_OF");
  EXPECT_EQ(child["references"][0]["spanID"], root["spanID"]);
  // 50 ps and 20 ps spans clamp to 1 us and say so.
  for (const auto& s : spans) {
    EXPECT_EQ(s["duration"], 1);
    bool tagged = false;
    for (const auto& t : s["tags"]) tagged |= t["key"] == "sub_us_duration" && t["value"] == true;
    EXPECT_TRUE(tagged);
    EXPECT_EQ(s["traceID"].get<std::string>().size(), 32u);
    EXPECT_EQ(s["spanID"].get<std::string>().size(), 16u);
  }
}

TEST(Jaeger, FieldOrderIsFixed) {
  const auto text = jaeger_of(host_two_span_traces());
  const std::vector<std::string> keys = {"\"traceID\"", "\"spanID\"", "\"operationName\"",
                                         "\"references\"", "\"startTime\"", "\"duration\"",
                                         "\"tags\"", "\"logs\""};
  std::size_t pos = text.find("\"spans\"");
  for (const auto& k : keys) {
    const auto next = text.find(k, pos);
    ASSERT_NE(next, std::string::npos) << k;
    pos = next;
  }
}

TEST(Jaeger, ReferencesResolveAndStartTimesKeepOrder) {
  TempDir dir;
  const auto files = generate({ScenarioName::RpcBackground, 2, 4}, dir.path());
  const auto traces = run_collect(load_config(files.wiring)).traces;
  const auto doc = nlohmann::json::parse(jaeger_of(traces));
  for (const auto& t : doc["data"]) {
    std::set<std::string> ids;
    for (const auto& s : t["spans"]) ids.insert(s["spanID"].get<std::string>());
    for (const auto& s : t["spans"]) {
      for (const auto& ref : s["references"]) EXPECT_TRUE(ids.contains(ref["spanID"]));
      EXPECT_TRUE(t["processes"].contains(s["processID"].get<std::string>()));
    }
  }
  // Flooring to microseconds never reorders.
  auto spans = all_spans(traces);
  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.start_ts < b.start_ts; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    EXPECT_LE(spans[i - 1].start_ts.ticks / kPicosPerMicro, spans[i].start_ts.ticks / kPicosPerMicro);
  }
}

TEST(Jsonl, RandomSpansRoundTrip) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 2000; ++i) {
    const Span s = random_span(rng);
    const auto line = span_to_jsonl(s);
    ASSERT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(span_from_jsonl(line), s) << line;
  }
}

TEST(Jsonl, EmptyExportIsHeaderOnly) { EXPECT_EQ(jsonl_of({}), "{\"spanweave_jsonl\":1}\n"); }

TEST(Jsonl, LinesSortedAndReexportIsIdentical) {
  std::mt19937_64 rng(29);
  Trace t;
  const TraceId id{1, 2};
  for (int i = 0; i < 20; ++i) {
    auto s = random_span(rng);
    s.trace_id = id;
    t.push_back(std::move(s));
  }
  const auto text = jsonl_of({t});
  std::istringstream in(text);
  const auto loaded = load_jsonl(in);
  ASSERT_EQ(loaded.size(), 20u);
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    const auto& a = loaded[i - 1];
    const auto& b = loaded[i];
    EXPECT_TRUE(std::tie(a.start_ts, a.span_id) <= std::tie(b.start_ts, b.span_id));
  }
  EXPECT_EQ(jsonl_of(group_traces(loaded)), text);
}

TEST(Jsonl, LoaderRejectsMalformedInput) {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return load_jsonl(in);
  };
  EXPECT_THROW(load(""), Error);
  EXPECT_THROW(load("{\"spanweave_jsonl\":2}\n"), Error);
  EXPECT_THROW(load("{\"spanweave_jsonl\":1}\n{\"trace_id\":1}\n"), Error);
  EXPECT_THROW(load("{\"spanweave_jsonl\":1}\nnot json\n"), Error);
  EXPECT_TRUE(load("{\"spanweave_jsonl\":1}\n").empty());
}

TEST(Summary, HostExample) {
  const auto stats = summarize(host_two_span_traces());
  EXPECT_EQ(stats.spans_per_kind.at(SpanKind::HostSyscall), 1u);
  EXPECT_EQ(stats.spans_per_kind.at(SpanKind::HostMmio), 1u);
  EXPECT_EQ(stats.traces, 1u);
  EXPECT_EQ(stats.max_depth, 2u);
  EXPECT_EQ(stats.spans_per_component.at("host0"), 2u);
}

TEST(Summary, EmptyIsZero) { EXPECT_EQ(summarize({}), SummaryStats{}); }

TEST(Summary, NoloadTenRequestsGivesTenTraces) {
  TempDir dir;
  const auto files = generate({ScenarioName::RpcNoload, 42, 10}, dir.path());
  const auto stats = summarize(run_collect(load_config(files.wiring)).traces);
  EXPECT_EQ(stats.traces, 10u);
}

TEST(AtomicFile, OnlyAppearsOnCommit) {
  TempDir dir;
  {
    AtomicFile f(dir / "x.json");
    f.stream() << "partial";
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "x.json"));
  EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
  {
    AtomicFile f(dir / "x.json");
    f.stream() << "done";
    f.commit();
  }
  EXPECT_EQ(read_text(dir / "x.json"), "done");
}
