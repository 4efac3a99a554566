#include <gtest/gtest.h>

#include <random>

#include "spanweave/errors.hpp"
#include "spanweave/parsers.hpp"
#include "test_util.hpp"

using namespace spanweave;
using spanweave::testing::TempDir;
using spanweave::testing::write_text;

namespace {

const ComponentRef kHost{"host0", ComponentType::Host};
const ComponentRef kNic{"nic0", ComponentType::Nic};
const ComponentRef kSwitch{"switch0", ComponentType::Network};

const Event& as_event(const ParseOutcome& o) {
  static const Event none;
  if (const auto* e = std::get_if<Event>(&o)) return *e;
  ADD_FAILURE() << "not an event";
  return none;
}

std::string reason(const ParseOutcome& o) {
  const auto* p = std::get_if<ParseError>(&o);
  return p ? p->reason : "<not a parse error>";
}

}  // namespace

TEST(HostDialect, Syscall) {
  const auto& e = as_event(parse_host_line("1000500: cpu0: SYSCALL num=44 name=sendto", kHost));
  EXPECT_EQ(e.ts.ticks, 1000500u);
  EXPECT_EQ(e.kind, EventKind::HostSyscallEnter);
  EXPECT_EQ(get_uint(e.attrs, "num"), 44u);
  EXPECT_EQ(get_ident(e.attrs, "name"), "sendto");
}

TEST(HostDialect, MmioWrite) {
  const auto& e =
      as_event(parse_host_line("1000900: host0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3", kHost));
  EXPECT_EQ(e.kind, EventKind::HostMmioWrite);
  EXPECT_EQ(get_hex(e.attrs, "addr"), 0x40001000u);
  EXPECT_EQ(get_uint(e.attrs, "size"), 4u);
  EXPECT_EQ(get_hex(e.attrs, "val"), 0x1u);
  EXPECT_EQ(get_uint(e.attrs, "id"), 3u);
  EXPECT_FALSE(validate_event(e));
}

TEST(HostDialect, BannerIsSkip) {
  EXPECT_TRUE(std::holds_alternative<Skip>(parse_host_line("warming caches...", kHost)));
  EXPECT_TRUE(std::holds_alternative<Skip>(parse_host_line("", kHost)));
}

TEST(HostDialect, BadHexIsParseError) {
  const auto o = parse_host_line("1000900: host0: MMIO_W addr=0xZZ", kHost);
  ASSERT_TRUE(std::holds_alternative<ParseError>(o));
  EXPECT_EQ(reason(o), "bad hex");
}

TEST(HostDialect, EveryOpcodeParsesAndValidates) {
  const char* lines[] = {
      "1: cpu0: CALL pc=0x10 target=0x400560", "2: cpu0: RET pc=0x14",
      "3: cpu0: SYSCALL num=44 name=sendto",   "4: cpu0: SYSRET num=44 ret=90",
      "5: cpu0: MMIO_R addr=0x40 size=4 id=1",  "6: cpu0: MMIO_W addr=0x40 size=4 val=0x2 id=2",
      "7: cpu0: MMIO_CR id=1",                  "8: cpu0: MMIO_CW id=2",
      "9: dma0: DMA_R addr=0x1000 size=64 id=3", "10: dma0: DMA_W addr=0x1000 size=64 id=4",
      "11: dma0: DMA_C id=3",                   "12: cpu0: MSIX vec=1",
      "13: cpu0: INT_POST vec=1",               "14: cpu0: INT_CLEAR vec=1",
      "15: cpu0: CTX_SWITCH pid=12",            "16: cpu0: PCI_CFG reg=0x10",
  };
  std::set<EventKind> kinds;
  for (const char* line : lines) {
    const auto o = parse_host_line(line, kHost);
    ASSERT_TRUE(std::holds_alternative<Event>(o)) << line << ": " << reason(o);
    const auto& e = std::get<Event>(o);
    EXPECT_FALSE(validate_event(e)) << line;
    kinds.insert(e.kind);
  }
  EXPECT_EQ(kinds.size(), 16u);
}

TEST(NicDialect, DmaIssueRead) {
  const auto& e =
      as_event(parse_nic_line("1001200 nic0: dma issue read addr=0x7f321000 size=1500 id=9", kNic));
  EXPECT_EQ(e.kind, EventKind::NicDmaIssueRead);
  EXPECT_EQ(e.ts.ticks, 1001200u);
  EXPECT_EQ(get_hex(e.attrs, "addr"), 0x7f321000u);
  EXPECT_EQ(get_uint(e.attrs, "size"), 1500u);
  EXPECT_EQ(get_uint(e.attrs, "id"), 9u);
}

TEST(NicDialect, Tx) {
  const auto& e = as_event(parse_nic_line("1003000 nic0: tx pkt len=90 hash=0x5ca1ab1e", kNic));
  EXPECT_EQ(e.kind, EventKind::NicTx);
  EXPECT_EQ(get_uint(e.attrs, "len"), 90u);
  EXPECT_EQ(get_hex(e.attrs, "hash"), 0x5ca1ab1eu);
}

TEST(NicDialect, EmptyValueIsParseError) {
  EXPECT_TRUE(std::holds_alternative<ParseError>(parse_nic_line("1003000 nic0: tx pkt len=", kNic)));
}

TEST(NicDialect, EveryPhraseParsesAndValidates) {
  const char* lines[] = {
      "1 nic0: mmio read addr=0x40 size=4 id=1", "2 nic0: mmio write addr=0x40 size=4 id=2",
      "3 nic0: mmio complete id=2",              "4 nic0: dma issue read addr=0x10 size=8 id=3",
      "5 nic0: dma issue write addr=0x10 size=8 id=4", "6 nic0: dma complete id=3",
      "7 nic0: tx pkt len=90 hash=0x1",          "8 nic0: rx pkt len=90",
      "9 nic0: msix issue vec=1",
  };
  std::set<EventKind> kinds;
  for (const char* line : lines) {
    const auto o = parse_nic_line(line, kNic);
    ASSERT_TRUE(std::holds_alternative<Event>(o)) << line << ": " << reason(o);
    EXPECT_FALSE(validate_event(std::get<Event>(o))) << line;
    kinds.insert(std::get<Event>(o).kind);
  }
  EXPECT_EQ(kinds.size(), 9u);
}

TEST(NetDialect, EnqueueConvertsSecondsExactly) {
  // 0.000001003 s is 1003 ns; 1 ns = 1000 ps.
  const std::uint64_t expected = 1003ULL * 1000ULL;
  const auto& e = as_event(parse_net_line("+0.000001003s switch0/dev1 ENQ pkt=17 len=90", kSwitch));
  EXPECT_EQ(e.kind, EventKind::NetEnqueue);
  EXPECT_EQ(e.ts.ticks, expected);
  EXPECT_EQ(get_uint(e.attrs, "pkt"), 17u);
  EXPECT_EQ(get_uint(e.attrs, "len"), 90u);
  EXPECT_EQ(get_ident(e.attrs, "node"), "switch0");
  EXPECT_EQ(get_ident(e.attrs, "dev"), "dev1");
}

TEST(NetDialect, Drop) {
  EXPECT_EQ(as_event(parse_net_line("+0.000001003s switch0/dev1 DROP pkt=17 len=90", kSwitch)).kind,
            EventKind::NetDrop);
}

TEST(NetDialect, ScientificNotationRejected) {
  EXPECT_TRUE(std::holds_alternative<ParseError>(
      parse_net_line("+1e-6s switch0/dev1 ENQ pkt=17 len=90", kSwitch)));
}

TEST(NetDialect, SecondsConversionMatchesIndependentOracle) {
  // Oracle: render ps as "<s>.<12 digits>" by integer division, then check
  // the parser maps it back; also truncation beyond 12 digits.
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t ps = rng() % 10'000'000'000'000'000ULL;
    char frac[16];
    std::snprintf(frac, sizeof frac, "%012llu",
                  static_cast<unsigned long long>(ps % 1'000'000'000'000ULL));
    const std::string text = std::to_string(ps / 1'000'000'000'000ULL) + "." + frac;
    ASSERT_EQ(decimal_seconds_to_ps(text), ps) << text;
    ASSERT_EQ(decimal_seconds_to_ps(text + "987"), ps) << text;
  }
  EXPECT_EQ(decimal_seconds_to_ps("2"), 2'000'000'000'000ULL);
  EXPECT_EQ(decimal_seconds_to_ps("0.5"), 500'000'000'000ULL);
  EXPECT_FALSE(decimal_seconds_to_ps("1e-6"));
  EXPECT_FALSE(decimal_seconds_to_ps("-1.0"));
  EXPECT_FALSE(decimal_seconds_to_ps(""));
  EXPECT_FALSE(decimal_seconds_to_ps("99999999999.0"));  // overflows 64 bits of ps
}

TEST(Parsers, TotalOnArbitraryInput) {
  // Property: any text maps to exactly one outcome without throwing.
  const std::vector<std::string> atoms = {
      "1000",  ": ",   "cpu0", "nic0",  "switch0/dev1", "+0.5s", "SYSCALL", "MMIO_W", "ENQ",
      "dma",   "issue", "read", "tx",   "pkt",  "len=",   "=",    "0x",   "0xZZ",  "id=3",
      "addr=0x10", " ", "  ", "\t", "\r", "\xff", "name=a", "-", "s", "99999999999999999999999"};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20000; ++i) {
    std::string line;
    const int n = static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) line += atoms[rng() % atoms.size()];
    for (auto d : {Dialect::Host, Dialect::Nic, Dialect::Net}) {
      const ComponentRef c = d == Dialect::Host ? kHost : d == Dialect::Nic ? kNic : kSwitch;
      ParseOutcome o;
      ASSERT_NO_THROW(o = parse_line(d, line, c)) << line;
      if (const auto* e = std::get_if<Event>(&o)) {
        EXPECT_FALSE(validate_event(*e)) << line;
      }
    }
  }
}

TEST(Stream, SixLineHostLog) {
  TempDir dir;
  write_text(dir / "h.log",
             "1: cpu0: SYSCALL num=1 name=write\n2: cpu0: CALL pc=0x1 target=0x2\n"
             "3: cpu0: RET pc=0x3\n4: cpu0: SYSRET num=1 ret=0\n5: cpu0: CTX_SWITCH pid=2\n"
             "6: cpu0: PCI_CFG reg=0x4\n");
  EventStream s({dir / "h.log", Dialect::Host, kHost});
  std::vector<std::uint64_t> seqs;
  while (auto e = s.next()) seqs.push_back(e->seq);
  EXPECT_EQ(seqs, (std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(s.counters().events, 6u);
}

TEST(Stream, GarbageLineCounted) {
  TempDir dir;
  write_text(dir / "h.log",
             "1: cpu0: SYSCALL num=1 name=write\n2: cpu0: CALL pc=0xQ target=0x2\n"
             "3: cpu0: RET pc=0x3\n4: cpu0: SYSRET num=1 ret=0\n5: cpu0: CTX_SWITCH pid=2\n"
             "6: cpu0: PCI_CFG reg=0x4\n");
  EventStream s({dir / "h.log", Dialect::Host, kHost});
  int n = 0;
  while (s.next()) ++n;
  EXPECT_EQ(n, 5);
  EXPECT_EQ(s.counters().parse_errors, 1u);
  ASSERT_EQ(s.errors().size(), 1u);
  EXPECT_EQ(s.errors()[0].line_no, 2u);
}

TEST(Stream, BackwardsTimestampIsFatal) {
  TempDir dir;
  write_text(dir / "h.log", "10: cpu0: CTX_SWITCH pid=1\n5: cpu0: CTX_SWITCH pid=2\n");
  EventStream s({dir / "h.log", Dialect::Host, kHost});
  ASSERT_TRUE(s.next());
  try {
    s.next();
    FAIL() << "expected OutOfOrderTimestamp";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfOrderTimestamp);
  }
}

TEST(Stream, ReorderBufferAbsorbsSmallInversions) {
  TempDir dir;
  write_text(dir / "h.log",
             "10: cpu0: CTX_SWITCH pid=1\n5: cpu0: CTX_SWITCH pid=2\n20: cpu0: CTX_SWITCH pid=3\n");
  EventStream s({dir / "h.log", Dialect::Host, kHost}, StreamOptions{4});
  std::vector<std::uint64_t> ts;
  std::vector<std::uint64_t> seq;
  while (auto e = s.next()) {
    ts.push_back(e->ts.ticks);
    seq.push_back(e->seq);
  }
  EXPECT_EQ(ts, (std::vector<std::uint64_t>{5, 10, 20}));
  EXPECT_EQ(seq, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Stream, MissingFileIsIoError) {
  TempDir dir;
  try {
    EventStream s({dir / "absent.log", Dialect::Host, kHost});
    s.next();
    FAIL() << "expected IoError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Stream, OverlongLineIsParseError) {
  TempDir dir;
  write_text(dir / "h.log", "1: cpu0: CTX_SWITCH pid=1\n" + std::string(kMaxLineLength + 10, 'x') +
                                "\n2: cpu0: CTX_SWITCH pid=2\n");
  EventStream s({dir / "h.log", Dialect::Host, kHost});
  int n = 0;
  while (s.next()) ++n;
  EXPECT_EQ(n, 2);
  EXPECT_EQ(s.counters().parse_errors, 1u);
}

TEST(Stream, DialectMustMatchComponentType) {
  TempDir dir;
  write_text(dir / "h.log", "");
  EXPECT_THROW(EventStream({dir / "h.log", Dialect::Nic, kHost}), Error);
}

TEST(Stream, MissingTrailingNewlineStillYieldsLastLine) {
  TempDir dir;
  write_text(dir / "n.log", "1 nic0: rx pkt len=90\n2 nic0: msix issue vec=1");
  EventStream s({dir / "n.log", Dialect::Nic, kNic});
  int n = 0;
  while (s.next()) ++n;
  EXPECT_EQ(n, 2);
}
