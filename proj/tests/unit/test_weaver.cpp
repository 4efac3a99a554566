#include <gtest/gtest.h>

#include <random>

#include "spanweave/errors.hpp"
#include "spanweave/weaver.hpp"
#include "test_util.hpp"

using namespace spanweave;
using namespace spanweave::testing;

namespace {

const Span* find_kind(const std::vector<Span>& spans, SpanKind kind, std::string_view component = {}) {
  for (const auto& s : spans) {
    if (s.kind == kind && (component.empty() || s.component.id == component)) return &s;
  }
  return nullptr;
}

std::size_t count_kind(const std::vector<Span>& spans, SpanKind kind) {
  return static_cast<std::size_t>(
      std::count_if(spans.begin(), spans.end(), [&](const Span& s) { return s.kind == kind; }));
}

const char* kNetConfig = R"({
  "components": [{"id": "nic0", "type": "nic"}, {"id": "switch0", "type": "network"},
                 {"id": "switch1", "type": "network"}, {"id": "nic1", "type": "nic"}],
  "sources": [{"component": "nic0", "path": "nic0.log", "dialect": "nic"},
              {"component": "switch0", "path": "switch0.log", "dialect": "net"},
              {"component": "switch1", "path": "switch1.log", "dialect": "net"},
              {"component": "nic1", "path": "nic1.log", "dialect": "nic"}],
  "channels": [{"a": {"component": "nic0"}, "b": {"component": "switch0", "dev": "dev0"}, "boundary": "eth"},
               {"a": {"component": "switch0", "dev": "dev1"}, "b": {"component": "switch1", "dev": "dev0"}, "boundary": "eth"},
               {"a": {"component": "switch1", "dev": "dev1"}, "b": {"component": "nic1"}, "boundary": "eth"}],
  "routes": [{"hops": ["nic0", "switch0", "switch1", "nic1"]}]
})";

}  // namespace

TEST(Coordinator, MayProcessFollowsPeerFrontiers) {
  // rank 0 (host) has rank 1 (nic) as its only inbound peer.
  Coordinator c({{1}, {0}});
  c.publish(1, EventKey{105, 1, 0});
  EXPECT_FALSE(c.may_process(0, EventKey{110, 0, 0}));
  c.publish(1, EventKey{110, 1, 0});
  // Equal timestamps: the lower rank goes first.
  EXPECT_TRUE(c.may_process(0, EventKey{110, 0, 0}));
  EXPECT_FALSE(c.may_process(0, EventKey{111, 0, 0}));
  c.finish(1);
  EXPECT_TRUE(c.may_process(0, EventKey{1'000'000, 0, 0}));
}

TEST(Coordinator, GlobalMinimumIsAlwaysReady) {
  // Property: with random frontiers on a random connected graph, the weaver
  // holding the smallest key may always proceed.
  std::mt19937_64 rng(17);
  for (int round = 0; round < 2000; ++round) {
    const std::uint32_t n = 2 + static_cast<std::uint32_t>(rng() % 6);
    std::vector<std::vector<std::uint32_t>> inbound(n);
    for (std::uint32_t i = 1; i < n; ++i) {
      const std::uint32_t j = static_cast<std::uint32_t>(rng() % i);
      inbound[i].push_back(j);
      inbound[j].push_back(i);
    }
    Coordinator c(inbound);
    std::vector<EventKey> keys(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      keys[i] = rng() % 5 == 0 ? EventKey::max() : EventKey{rng() % 50, i, rng() % 3};
      c.publish(i, keys[i]);
    }
    const auto min = std::min_element(keys.begin(), keys.end());
    if (*min == EventKey::max()) continue;
    EXPECT_TRUE(c.may_process(static_cast<std::uint32_t>(min - keys.begin()), *min));
  }
}

TEST(ContextQueue, ConservationAndEviction) {
  ContextQueue q(2);
  TraceContext ctx;
  EXPECT_FALSE(q.push({1, 0, 0}, ctx));
  EXPECT_FALSE(q.push({2, 0, 0}, ctx));
  const auto evicted = q.push({3, 0, 0}, ctx);
  ASSERT_TRUE(evicted);
  EXPECT_EQ(evicted->key.ts, 1u);
  auto any = [](const TraceContext&) { return true; };
  // Contexts at or after the reader's key are invisible.
  EXPECT_FALSE(q.find({2, 0, 0}, any));
  auto hit = q.find({3, 0, 0}, any);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->key.ts, 2u);
  EXPECT_TRUE(q.take(hit->key));
  EXPECT_EQ(q.pushed(), 3u);
  EXPECT_EQ(q.evicted(), 1u);
  EXPECT_EQ(q.matched(), 1u);
  EXPECT_EQ(q.pushed(), q.matched() + q.evicted() + q.size());
}

TEST(HostWeaver, SyscallWithMmio) {
  TempDir dir;
  const auto r = run_logs(dir, kHostOnlyConfig,
                          {{"host0.log",
                            "100: cpu0: SYSCALL num=44 name=sendto\n"
                            "110: cpu0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3\n"
                            "130: cpu0: MMIO_CW id=3\n"
                            "150: cpu0: SYSRET num=44 ret=90\n"}});
  ASSERT_EQ(r.traces.size(), 1u);
  const auto& spans = r.traces[0];
  ASSERT_EQ(spans.size(), 2u);
  const Span* sys = find_kind(spans, SpanKind::HostSyscall);
  const Span* mmio = find_kind(spans, SpanKind::HostMmio);
  ASSERT_TRUE(sys && mmio);
  EXPECT_EQ(sys->start_ts.ticks, 100u);
  EXPECT_EQ(sys->end_ts.ticks, 150u);
  EXPECT_FALSE(sys->parent_span_id);
  EXPECT_EQ(mmio->start_ts.ticks, 110u);
  EXPECT_EQ(mmio->end_ts.ticks, 130u);
  EXPECT_EQ(mmio->parent_span_id, sys->span_id);
  // No NIC is wired, so the context has nowhere to go.
  EXPECT_EQ(r.stats.contexts_pushed, 0u);
}

TEST(HostWeaver, ContextPushedAtMmioTimestamp) {
  TempDir dir;
  const auto r = run_logs(dir, kHostNicConfig,
                          {{"host0.log",
                            "100: cpu0: SYSCALL num=44 name=sendto\n"
                            "110: cpu0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3\n"
                            "130: cpu0: MMIO_CW id=3\n"
                            "150: cpu0: SYSRET num=44 ret=90\n"},
                           {"nic0.log", "118 nic0: mmio write addr=0x40001000 size=4 id=77\n"
                                        "125 nic0: mmio complete id=77\n"}});
  EXPECT_EQ(r.stats.contexts_pushed, 1u);
  EXPECT_EQ(r.stats.contexts_matched, 1u);
  ASSERT_EQ(r.traces.size(), 1u);
  const auto& spans = r.traces[0];
  const Span* host_mmio = find_kind(spans, SpanKind::HostMmio);
  const Span* nic_mmio = find_kind(spans, SpanKind::NicMmioSpan);
  ASSERT_TRUE(host_mmio && nic_mmio);
  EXPECT_EQ(nic_mmio->parent_span_id, host_mmio->span_id);
  EXPECT_EQ(nic_mmio->trace_id, host_mmio->trace_id);
}

TEST(HostWeaver, LoneCompletionIsCounted) {
  TempDir dir;
  const auto r = run_logs(dir, kHostOnlyConfig, {{"host0.log", "100: cpu0: MMIO_CW id=9\n"}});
  EXPECT_EQ(r.stats.unmatched_completions, 1u);
  EXPECT_EQ(r.stats.spans_emitted, 0u);
}

TEST(HostWeaver, OpenSyscallIsTruncated) {
  TempDir dir;
  const auto r = run_logs(dir, kHostOnlyConfig,
                          {{"host0.log", "100: cpu0: SYSCALL num=44 name=sendto\n"
                                         "120: cpu0: CALL pc=0x1 target=0x2\n"}});
  ASSERT_EQ(r.traces.size(), 1u);
  const auto& s = r.traces[0].at(0);
  EXPECT_EQ(s.attrs.at("truncated"), AttrValue{true});
  EXPECT_EQ(s.end_ts.ticks, 120u);
  EXPECT_EQ(r.stats.truncated_spans, 1u);
}

TEST(HostWeaver, GapEventsGoToCpuActivity) {
  TempDir dir;
  const auto r = run_logs(dir, kHostOnlyConfig,
                          {{"host0.log", "100: cpu0: CTX_SWITCH pid=3\n"
                                         "120: cpu0: CALL pc=0x1 target=0x2\n"
                                         "130: cpu0: SYSCALL num=1 name=write\n"
                                         "140: cpu0: SYSRET num=1 ret=0\n"}});
  const auto spans = all_spans(r.traces);
  const Span* act = find_kind(spans, SpanKind::HostCpuActivity);
  ASSERT_TRUE(act);
  EXPECT_EQ(act->events.size(), 2u);
  EXPECT_EQ(count_kind(spans, SpanKind::HostSyscall), 1u);
}

TEST(HostWeaver, PciConfigIsPointSpan) {
  TempDir dir;
  const auto r = run_logs(dir, kHostOnlyConfig, {{"host0.log", "100: cpu0: PCI_CFG reg=0x10\n"}});
  const auto spans = all_spans(r.traces);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].kind, SpanKind::HostPciConfig);
  EXPECT_EQ(spans[0].start_ts, spans[0].end_ts);
}

TEST(NicWeaver, MmioWithoutHostContextBecomesRoot) {
  TempDir dir;
  const auto r = run_logs(dir, kHostNicConfig,
                          {{"host0.log", "500: cpu0: CTX_SWITCH pid=1\n"},
                           {"nic0.log", "118 nic0: mmio write addr=0x40001000 size=4 id=77\n"
                                        "125 nic0: mmio complete id=77\n"}});
  EXPECT_EQ(r.stats.unmatched_spans, 1u);
  const Span* nic = find_kind(all_spans(r.traces), SpanKind::NicMmioSpan);
  ASSERT_TRUE(nic);
  EXPECT_FALSE(nic->parent_span_id);
}

TEST(NicWeaver, TxPushesEthContext) {
  TempDir dir;
  const auto r = run_logs(dir, kNetConfig,
                          {{"nic0.log", "300000 nic0: tx pkt len=90 hash=0x1\n"},
                           {"switch0.log", "+0.000000301s switch0/dev1 ENQ pkt=1 len=90\n"
                                           "+0.000000302s switch0/dev1 DEQ pkt=1 len=90\n"},
                           {"switch1.log", "+0.000000303s switch1/dev1 ENQ pkt=1 len=90\n"
                                           "+0.000000304s switch1/dev1 DEQ pkt=1 len=90\n"},
                           {"nic1.log", "305000 nic1: rx pkt len=90\n"}});
  EXPECT_EQ(r.stats.contexts_pushed, 3u);
  EXPECT_EQ(r.stats.contexts_matched, 3u);
  ASSERT_EQ(r.traces.size(), 1u);
  const auto& spans = r.traces[0];
  const Span* tx = find_kind(spans, SpanKind::NicTxSpan);
  const Span* hop0 = find_kind(spans, SpanKind::NetHop, "switch0");
  const Span* hop1 = find_kind(spans, SpanKind::NetHop, "switch1");
  const Span* rx = find_kind(spans, SpanKind::NicRxSpan);
  ASSERT_TRUE(tx && hop0 && hop1 && rx);
  EXPECT_EQ(tx->start_ts.ticks, 300000u);
  EXPECT_EQ(hop0->parent_span_id, tx->span_id);
  EXPECT_EQ(hop1->parent_span_id, hop0->span_id);
  EXPECT_EQ(rx->parent_span_id, hop1->span_id);
  EXPECT_EQ(hop0->start_ts.ticks, 301000u);
  EXPECT_EQ(hop0->end_ts.ticks, 302000u);
}

TEST(NetWeaver, DropMarksSpanAndPushesNothing) {
  TempDir dir;
  const auto r = run_logs(dir, kNetConfig,
                          {{"nic0.log", "300000 nic0: tx pkt len=90 hash=0x1\n"},
                           {"switch0.log", "+0.000000301s switch0/dev1 ENQ pkt=17 len=90\n"
                                           "+0.000000302s switch0/dev1 DROP pkt=17 len=90\n"},
                           {"switch1.log", ""},
                           {"nic1.log", ""}});
  const Span* hop = find_kind(all_spans(r.traces), SpanKind::NetHop);
  ASSERT_TRUE(hop);
  EXPECT_EQ(hop->attrs.at("dropped"), AttrValue{true});
  EXPECT_EQ(r.stats.contexts_pushed, 1u);  // the tx only
}

TEST(NetWeaver, UnknownDeviceIsFatal) {
  TempDir dir;
  try {
    run_logs(dir, kNetConfig,
             {{"nic0.log", ""},
              {"switch0.log", "+0.000000301s switch0/dev9 ENQ pkt=17 len=90\n"},
              {"switch1.log", ""},
              {"nic1.log", ""}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownDevice);
    EXPECT_EQ(e.component(), "switch0");
  }
}

TEST(Weaver, EverySpanIsNonEmptyAndWellFormed) {
  TempDir dir;
  const auto r = run_logs(dir, kHostNicConfig,
                          {{"host0.log",
                            "100: cpu0: SYSCALL num=44 name=sendto\n"
                            "110: cpu0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3\n"
                            "130: cpu0: MMIO_CW id=3\n"
                            "150: cpu0: SYSRET num=44 ret=90\n"
                            "900: dma0: DMA_R addr=0x1000 size=90 id=0\n"
                            "950: dma0: DMA_C id=0\n"},
                           {"nic0.log", "118 nic0: mmio write addr=0x40001000 size=4 id=77\n"
                                        "125 nic0: mmio complete id=77\n"
                                        "200 nic0: dma issue read addr=0x1000 size=90 id=1\n"
                                        "1000 nic0: dma complete id=1\n"}});
  const auto spans = all_spans(r.traces);
  EXPECT_EQ(r.traces.size(), 1u);
  std::uint64_t events = 0;
  for (const auto& s : spans) {
    EXPECT_FALSE(s.events.empty());
    EXPECT_LE(s.start_ts, s.end_ts);
    for (const auto& e : s.events) {
      EXPECT_LE(s.start_ts, e.ts);
      EXPECT_LE(e.ts, s.end_ts);
    }
    events += s.events.size();
  }
  EXPECT_EQ(events, r.stats.events_woven);
  const Span* host_dma = find_kind(spans, SpanKind::HostDma);
  const Span* nic_dma = find_kind(spans, SpanKind::NicDmaSpan);
  ASSERT_TRUE(host_dma && nic_dma);
  EXPECT_EQ(host_dma->parent_span_id, nic_dma->span_id);
}
