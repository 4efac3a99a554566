#include "spanweave/simgen.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spanweave/errors.hpp"
#include "spanweave/ids.hpp"

namespace spanweave {
namespace {

constexpr std::uint64_t ns(std::uint64_t v) { return v * kPicosPerNano; }

constexpr std::uint64_t kRpcLen = 90;
constexpr std::uint64_t kBulkLen = 1500;
constexpr std::uint64_t kBar = 0x40001000;
constexpr std::uint64_t kVector = 1;
constexpr std::uint64_t kStart = 1 * kPicosPerMicro;
constexpr std::uint64_t kWindowMargin = 2 * kPicosPerMicro;

struct Symbol {
  std::uint64_t addr;
  const char* name;
};

constexpr Symbol kSymbols[] = {
    {0x400560, "i40e_xmit"},      {0x400600, "memcpy"},          {0x400680, "tcp_sendmsg"},
    {0x400720, "ip_output"},      {0x4007a0, "dev_queue_xmit"},  {0x400820, "udp_recvmsg"},
    {0x4008c0, "skb_copy_datagram"}, {0x400940, "i40e_napi_poll"}, {0x4009e0, "net_rx_action"},
    {0x400a60, "schedule"},
};
constexpr std::size_t kSendChain[] = {2, 3, 4, 0, 1, 3, 4, 0};
constexpr std::size_t kRecvChain[] = {5, 6, 1, 9, 6, 1, 5, 6};
constexpr std::size_t kIrqChain[] = {8, 7};

std::uint64_t link_delay(std::uint64_t len) { return ns(500) + len * 800; }

std::string seconds_text(std::uint64_t ps) {
  constexpr std::uint64_t kPerSecond = 1'000'000'000'000ULL;
  std::string frac = std::to_string(ps % kPerSecond);
  frac.insert(0, 12 - frac.size(), '0');
  while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
  return std::to_string(ps / kPerSecond) + "." + frac;
}

struct Line {
  std::uint64_t ts = 0;
  std::string text;
  std::optional<std::size_t> span;  // empty for banner lines
};

struct Side {
  std::string host;
  std::string nic;
  StreamRng host_rng;
  StreamRng nic_rng;
  std::uint64_t buffer_base;
  std::uint64_t pid;
  std::uint64_t host_mmio_id = 0;
  std::uint64_t host_dma_id = 0;
  std::uint64_t nic_mmio_id = 0;
  std::uint64_t nic_dma_id = 0;
};

struct TxResult {
  std::uint64_t syscall_ts;
  std::uint64_t mmio_ts;
  std::uint64_t nic_mmio_ts;
  std::uint64_t tx_ts;
  std::size_t tx_span;
};

struct RxResult {
  std::uint64_t rx_ts;
  std::uint64_t nic_msix_ts;
  std::uint64_t host_msix_ts;
  std::uint64_t clear_ts;
  std::size_t interrupt_span;
};

struct Hop {
  std::string node;
  std::string out_dev;
  std::uint64_t enq = 0;
  std::uint64_t deq = 0;
};

struct NetResult {
  std::vector<Hop> hops;
  std::uint64_t arrival = 0;
  std::size_t last_span = 0;
  std::uint64_t queue_delay = 0;
};

struct RequestWindow {
  std::uint64_t lo;
  std::uint64_t hi;
};

class Builder {
 public:
  explicit Builder(const Scenario& s)
      : s_(s),
        client_{"host0", "nic0", {s.seed, "host0"}, {s.seed, "nic0"}, 0x7f321000, 1200},
        server_{"host1", "nic1", {s.seed, "host1"}, {s.seed, "nic1"}, 0x7f521000, 2400},
        switch0_rng_(s.seed, "switch0"),
        switch1_rng_(s.seed, "switch1"),
        bulk_rng_(s.seed, "bulk0"),
        workload_rng_(s.seed, "workload") {
    for (const auto* id : {"host0", "nic0", "switch0", "switch1", "nic1", "host1"}) lines_[id];
    banner("host0", {"gem5 Simulator System.  canonical host dialect", "warming caches..."});
    banner("host1", {"gem5 Simulator System.  canonical host dialect", "warming caches..."});
    banner("nic0", {"i40e behavioral model: link up"});
    banner("nic1", {"i40e behavioral model: link up"});
    banner("switch0", {"# ns-3 ascii trace, canonical dialect"});
    banner("switch1", {"# ns-3 ascii trace, canonical dialect"});
    truth_.scenario = s;
  }

  GeneratedScenario build() {
    std::uint64_t t = kStart;
    for (std::uint64_t r = 0; r < s_.n_requests; ++r) t = request(r, t);
    if (s_.name == ScenarioName::RpcBackground && s_.n_requests > 0) background(kStart, t);
    return finish();
  }

 private:
  // -- truth bookkeeping ----------------------------------------------------

  std::size_t trace(std::string label) {
    truth_.traces.push_back({truth_.traces.size(), std::move(label)});
    return truth_.traces.back().id;
  }

  std::size_t span(std::size_t trace, const std::string& component, SpanKind kind,
                   std::string label, std::optional<std::size_t> parent) {
    truth_.spans.push_back({truth_.spans.size(), trace, component, kind, std::move(label), parent});
    return truth_.spans.back().id;
  }

  void banner(const std::string& component, std::initializer_list<const char*> texts) {
    for (const auto* text : texts) lines_[component].push_back({0, text, std::nullopt});
  }

  void host(const Side& side, std::uint64_t ts, const char* unit, const std::string& body,
            std::size_t span_id) {
    lines_[side.host].push_back(
        {ts, std::to_string(ts) + ": " + unit + ": " + body, span_id});
  }

  void nic(const Side& side, std::uint64_t ts, const std::string& body, std::size_t span_id) {
    lines_[side.nic].push_back({ts, std::to_string(ts) + " " + side.nic + ": " + body, span_id});
  }

  void net(const std::string& node, const std::string& dev, std::uint64_t ts, const char* op,
           std::uint64_t pkt, std::uint64_t len, std::size_t span_id) {
    lines_[node].push_back({ts,
                            "+" + seconds_text(ts) + "s " + node + "/" + dev + " " + op +
                                " pkt=" + std::to_string(pkt) + " len=" + std::to_string(len),
                            span_id});
  }

  static std::string call(std::size_t fn, std::size_t frame) {
    return "CALL pc=" + format_hex(kSymbols[fn].addr + 0x10 + frame * 4) +
           " target=" + format_hex(kSymbols[fn].addr);
  }

  static std::string ret(std::size_t fn) {
    return "RET pc=" + format_hex(kSymbols[fn].addr + 0x3c);
  }

  // -- request phases -------------------------------------------------------

  TxResult send(Side& side, std::size_t tr, std::optional<std::size_t> parent, std::uint64_t t,
                const std::string& label, std::uint64_t len) {
    auto& hr = side.host_rng;
    auto& nr = side.nic_rng;
    TxResult out{};
    const std::size_t sys = span(tr, side.host, SpanKind::HostSyscall, label + "/sendto", parent);
    out.syscall_ts = t;
    host(side, t, "cpu0", "SYSCALL num=44 name=sendto", sys);
    const std::uint64_t frames = hr.uniform(3, 8);
    for (std::uint64_t i = 0; i < frames; ++i) {
      t += ns(hr.uniform(20, 60));
      host(side, t, "cpu0", call(kSendChain[i], i), sys);
    }
    t += ns(hr.uniform(20, 60));
    out.mmio_ts = t;
    const std::size_t mmio = span(tr, side.host, SpanKind::HostMmio, label + "/doorbell", sys);
    const std::uint64_t mmio_id = side.host_mmio_id++;
    const std::uint64_t tail = mmio_id % 512;
    host(side, t, "cpu0",
         "MMIO_W addr=" + format_hex(kBar) + " size=4 val=" + format_hex(tail) +
             " id=" + std::to_string(mmio_id),
         mmio);
    t += ns(hr.uniform(50, 100));
    host(side, t, "cpu0", "MMIO_CW id=" + std::to_string(mmio_id), mmio);
    for (std::uint64_t i = frames; i-- > 0;) {
      t += ns(hr.uniform(10, 20));
      host(side, t, "cpu0", ret(kSendChain[i]), sys);
    }
    t += ns(hr.uniform(10, 30));
    host(side, t, "cpu0", "SYSRET num=44 ret=" + std::to_string(len), sys);

    // NIC fetches the descriptor/payload and transmits.
    std::uint64_t n = out.mmio_ts + ns(nr.uniform(400, 600));
    out.nic_mmio_ts = n;
    const std::size_t nmmio = span(tr, side.nic, SpanKind::NicMmioSpan, label + "/nic-doorbell", mmio);
    const std::uint64_t nic_mmio_id = side.nic_mmio_id++;
    nic(side, n,
        "mmio write addr=" + format_hex(kBar) + " size=4 id=" + std::to_string(nic_mmio_id), nmmio);
    n += ns(nr.uniform(20, 50));
    nic(side, n, "mmio complete id=" + std::to_string(nic_mmio_id), nmmio);

    n += ns(nr.uniform(50, 150));
    const std::size_t ndma = span(tr, side.nic, SpanKind::NicDmaSpan, label + "/nic-fetch", nmmio);
    const std::uint64_t dma_id = side.nic_dma_id++;
    const std::uint64_t addr = side.buffer_base + (dma_id % 64) * 0x1000;
    nic(side, n,
        "dma issue read addr=" + format_hex(addr) + " size=" + std::to_string(len) +
            " id=" + std::to_string(dma_id),
        ndma);
    std::uint64_t h = n + ns(hr.uniform(400, 600));
    const std::size_t hdma = span(tr, side.host, SpanKind::HostDma, label + "/host-fetch", ndma);
    const std::uint64_t host_dma_id = side.host_dma_id++;
    host(side, h, "dma0",
         "DMA_R addr=" + format_hex(addr) + " size=" + std::to_string(len) +
             " id=" + std::to_string(host_dma_id),
         hdma);
    h += ns(hr.uniform(100, 300));
    host(side, h, "dma0", "DMA_C id=" + std::to_string(host_dma_id), hdma);
    n = h + ns(nr.uniform(400, 600));
    nic(side, n, "dma complete id=" + std::to_string(dma_id), ndma);

    n += ns(nr.uniform(100, 300));
    out.tx_ts = n;
    out.tx_span = span(tr, side.nic, SpanKind::NicTxSpan, label + "/tx", ndma);
    const std::uint64_t hash = mix64(s_.seed ^ (n << 1)) & 0xffffffffULL;
    nic(side, n, "tx pkt len=" + std::to_string(len) + " hash=" + format_hex(hash), out.tx_span);
    return out;
  }

  RxResult receive(Side& side, std::size_t tr, std::size_t hop_span, std::uint64_t arrival,
                   const std::string& label, std::uint64_t len) {
    auto& hr = side.host_rng;
    auto& nr = side.nic_rng;
    RxResult out{};
    out.rx_ts = arrival;
    const std::size_t rx = span(tr, side.nic, SpanKind::NicRxSpan, label + "/rx", hop_span);
    nic(side, arrival, "rx pkt len=" + std::to_string(len), rx);

    std::uint64_t n = arrival + ns(nr.uniform(50, 150));
    const std::size_t ndma = span(tr, side.nic, SpanKind::NicDmaSpan, label + "/nic-store", rx);
    const std::uint64_t dma_id = side.nic_dma_id++;
    const std::uint64_t addr = side.buffer_base + 0x100000 + (dma_id % 64) * 0x1000;
    nic(side, n,
        "dma issue write addr=" + format_hex(addr) + " size=" + std::to_string(len) +
            " id=" + std::to_string(dma_id),
        ndma);
    std::uint64_t h = n + ns(hr.uniform(400, 600));
    const std::size_t hdma = span(tr, side.host, SpanKind::HostDma, label + "/host-store", ndma);
    const std::uint64_t host_dma_id = side.host_dma_id++;
    host(side, h, "dma0",
         "DMA_W addr=" + format_hex(addr) + " size=" + std::to_string(len) +
             " id=" + std::to_string(host_dma_id),
         hdma);
    h += ns(hr.uniform(100, 300));
    host(side, h, "dma0", "DMA_C id=" + std::to_string(host_dma_id), hdma);
    n = h + ns(nr.uniform(400, 600));
    nic(side, n, "dma complete id=" + std::to_string(dma_id), ndma);

    n += ns(nr.uniform(20, 50));
    out.nic_msix_ts = n;
    nic(side, n, "msix issue vec=" + std::to_string(kVector), rx);

    h = n + ns(hr.uniform(400, 600));
    out.host_msix_ts = h;
    const std::size_t irq = span(tr, side.host, SpanKind::HostInterrupt, label + "/irq", rx);
    out.interrupt_span = irq;
    host(side, h, "cpu0", "MSIX vec=" + std::to_string(kVector), irq);
    h += ns(hr.uniform(10, 30));
    host(side, h, "cpu0", "INT_POST vec=" + std::to_string(kVector), irq);
    const std::uint64_t frames = hr.uniform(1, 2);
    for (std::uint64_t i = 0; i < frames; ++i) {
      h += ns(hr.uniform(10, 30));
      host(side, h, "cpu0", call(kIrqChain[i], i), irq);
    }
    for (std::uint64_t i = frames; i-- > 0;) {
      h += ns(hr.uniform(10, 30));
      host(side, h, "cpu0", ret(kIrqChain[i]), irq);
    }
    h += ns(hr.uniform(10, 30));
    out.clear_ts = h;
    host(side, h, "cpu0", "INT_CLEAR vec=" + std::to_string(kVector), irq);
    return out;
  }

  std::uint64_t link_arrival(const std::string& from, const std::string& to, std::uint64_t t,
                             std::uint64_t len) {
    auto& last = last_arrival_[from + "->" + to];
    const std::uint64_t a = std::max(t + link_delay(len), last + 1);
    last = a;
    return a;
  }

  NetResult forward(std::vector<Hop> hops, const std::string& from, const std::string& to,
                    std::uint64_t tx_ts, std::uint64_t pkt, std::size_t tr, std::size_t parent,
                    const std::string& label, bool response) {
    NetResult out;
    std::string prev = from;
    std::uint64_t prev_ts = tx_ts;
    for (auto& hop : hops) {
      auto& rng = hop.node == "switch0" ? switch0_rng_ : switch1_rng_;
      hop.enq = link_arrival(prev, hop.node, prev_ts, kRpcLen);
      const std::size_t hs = span(tr, hop.node, SpanKind::NetHop, label + "/" + hop.node, parent);
      net(hop.node, hop.out_dev, hop.enq, "ENQ", pkt, kRpcLen, hs);
      std::uint64_t dwell = ns(1000) + ns(rng.uniform(0, 40));
      if (hop.node == "switch0" && response) {
        const std::uint64_t residual = ns(rng.uniform(40, 80));
        if (s_.name == ScenarioName::RpcBackground) {
          out.queue_delay = s_.queueing_delta_ps + residual;
          dwell += out.queue_delay;
        }
      }
      auto& last = last_deq_[hop.node + "/" + hop.out_dev];
      hop.deq = std::max(hop.enq + dwell, last + 1);
      last = hop.deq;
      net(hop.node, hop.out_dev, hop.deq, "DEQ", pkt, kRpcLen, hs);
      parent = hs;
      prev = hop.node;
      prev_ts = hop.deq;
    }
    out.arrival = link_arrival(prev, to, prev_ts, kRpcLen);
    out.last_span = parent;
    out.hops = std::move(hops);
    return out;
  }

  PathTiming timing(std::uint64_t r, bool response, const Side& src, const Side& dst,
                    const TxResult& tx, const NetResult& net_path, const RxResult& rx,
                    std::uint64_t wake) {
    PathTiming p;
    p.request = r;
    p.response = response;
    p.dwell.emplace_back(src.host, tx.mmio_ts - tx.syscall_ts);
    p.links.emplace_back(src.host + "->" + src.nic, tx.nic_mmio_ts - tx.mmio_ts);
    p.dwell.emplace_back(src.nic, tx.tx_ts - tx.nic_mmio_ts);
    std::string prev = src.nic;
    std::uint64_t prev_ts = tx.tx_ts;
    for (const auto& hop : net_path.hops) {
      p.links.emplace_back(prev + "->" + hop.node, hop.enq - prev_ts);
      p.dwell.emplace_back(hop.node, hop.deq - hop.enq);
      prev = hop.node;
      prev_ts = hop.deq;
    }
    p.links.emplace_back(prev + "->" + dst.nic, rx.rx_ts - prev_ts);
    p.dwell.emplace_back(dst.nic, rx.nic_msix_ts - rx.rx_ts);
    p.links.emplace_back(dst.nic + "->" + dst.host, rx.host_msix_ts - rx.nic_msix_ts);
    p.dwell.emplace_back(dst.host, wake - rx.host_msix_ts);
    p.e2e_ps = wake - tx.syscall_ts;
    return p;
  }

  std::uint64_t request(std::uint64_t r, std::uint64_t t) {
    const std::string label = "req" + std::to_string(r);
    const std::size_t tr = trace("request " + std::to_string(r));

    const TxResult tx = send(client_, tr, std::nullopt, t, label + "/client", kRpcLen);
    const std::uint64_t req_pkt = next_pkt_++;
    const NetResult req_net =
        forward({{"switch0", "dev1"}, {"switch1", "dev1"}}, "nic0", "nic1", tx.tx_ts, req_pkt, tr,
                tx.tx_span, label + "/request", false);
    truth_.packets.push_back({req_pkt, "request", 0});
    windows_.push_back({tx.tx_ts, req_net.hops.back().deq});

    const RxResult rx = receive(server_, tr, req_net.last_span, req_net.arrival,
                                label + "/server", kRpcLen);
    const std::uint64_t wake = rx.clear_ts + ns(server_.host_rng.uniform(200, 500));
    truth_.timings.push_back(timing(r, false, client_, server_, tx, req_net, rx, wake));

    const TxResult tx2 = send(server_, tr, rx.interrupt_span, wake, label + "/server", kRpcLen);
    const std::uint64_t resp_pkt = next_pkt_++;
    const NetResult resp_net =
        forward({{"switch1", "dev0"}, {"switch0", "dev0"}}, "nic1", "nic0", tx2.tx_ts, resp_pkt,
                tr, tx2.tx_span, label + "/response", true);
    truth_.packets.push_back({resp_pkt, "response", resp_net.queue_delay});

    const RxResult rx2 = receive(client_, tr, resp_net.last_span, resp_net.arrival,
                                 label + "/client", kRpcLen);
    auto& hr = client_.host_rng;
    std::uint64_t h = rx2.clear_ts + ns(hr.uniform(200, 500));
    truth_.timings.push_back(timing(r, true, server_, client_, tx2, resp_net, rx2, h));

    const std::size_t recv =
        span(tr, client_.host, SpanKind::HostSyscall, label + "/client/recvfrom", rx2.interrupt_span);
    host(client_, h, "cpu0", "SYSCALL num=45 name=recvfrom", recv);
    h += ns(hr.uniform(10, 30));
    host(client_, h, "cpu0", "CTX_SWITCH pid=" + std::to_string(client_.pid), recv);
    const std::uint64_t frames = hr.uniform(3, 8);
    for (std::uint64_t i = 0; i < frames; ++i) {
      h += ns(hr.uniform(20, 60));
      host(client_, h, "cpu0", call(kRecvChain[i], i), recv);
    }
    for (std::uint64_t i = frames; i-- > 0;) {
      h += ns(hr.uniform(10, 20));
      host(client_, h, "cpu0", ret(kRecvChain[i]), recv);
    }
    h += ns(hr.uniform(10, 30));
    host(client_, h, "cpu0", "SYSRET num=45 ret=" + std::to_string(kRpcLen), recv);

    return h + workload_rng_.uniform(2 * s_.window_ps, 3 * s_.window_ps);
  }

  /// Bulk flow bulk0 -> switch0 -> switch1 -> sink0. Packets whose path
  /// would overlap a request crossing the same switches are not sent, which
  /// keeps every link strictly FIFO.
  void background(std::uint64_t from, std::uint64_t until) {
    std::size_t w = 0;
    std::uint64_t t = from;
    for (;;) {
      t += ns(bulk_rng_.uniform(1300, 1700));
      if (t >= until) break;
      const std::uint64_t enq0 = t;
      const std::uint64_t deq0 = enq0 + ns(1000) + ns(bulk_rng_.uniform(0, 40));
      const std::uint64_t enq1 = deq0 + link_delay(kBulkLen);
      const std::uint64_t deq1 = enq1 + ns(1000) + ns(bulk_rng_.uniform(0, 40));
      while (w < windows_.size() && windows_[w].hi + kWindowMargin < enq0) ++w;
      if (w < windows_.size() && windows_[w].lo < deq1 + kWindowMargin &&
          enq0 < windows_[w].hi + kWindowMargin) {
        continue;
      }
      const std::uint64_t pkt = next_pkt_++;
      const std::size_t tr = trace("background pkt " + std::to_string(pkt));
      const std::string label = "bulk" + std::to_string(pkt);
      const std::size_t h0 = span(tr, "switch0", SpanKind::NetHop, label + "/switch0", std::nullopt);
      net("switch0", "dev1", enq0, "ENQ", pkt, kBulkLen, h0);
      net("switch0", "dev1", deq0, "DEQ", pkt, kBulkLen, h0);
      const std::size_t h1 = span(tr, "switch1", SpanKind::NetHop, label + "/switch1", h0);
      net("switch1", "dev2", enq1, "ENQ", pkt, kBulkLen, h1);
      net("switch1", "dev2", deq1, "DEQ", pkt, kBulkLen, h1);
      truth_.packets.push_back({pkt, "background", 0});
    }
  }

  GeneratedScenario finish() {
    GeneratedScenario out;
    out.scenario = s_;
    for (auto& [component, lines] : lines_) {
      std::stable_sort(lines.begin(), lines.end(),
                       [](const Line& a, const Line& b) { return a.ts < b.ts; });
      auto& text = out.logs[component];
      std::uint64_t seq = 0;
      for (auto& line : lines) {
        text.push_back(std::move(line.text));
        if (line.span) truth_.events.push_back({component, seq++, *line.span});
      }
    }
    std::sort(truth_.packets.begin(), truth_.packets.end(),
              [](const PacketTruth& a, const PacketTruth& b) { return a.pkt < b.pkt; });
    out.truth = std::move(truth_);
    out.config = wiring();
    for (const auto& sym : kSymbols) out.symbols += format_hex(sym.addr) + " " + sym.name + "\n";
    return out;
  }

  WiringConfig wiring() const {
    WiringConfig c;
    c.components = {{"host0", ComponentType::Host},     {"nic0", ComponentType::Nic},
                    {"switch0", ComponentType::Network}, {"switch1", ComponentType::Network},
                    {"nic1", ComponentType::Nic},        {"host1", ComponentType::Host}};
    for (const auto& comp : c.components) {
      const Dialect d = comp.type == ComponentType::Host  ? Dialect::Host
                        : comp.type == ComponentType::Nic ? Dialect::Nic
                                                          : Dialect::Net;
      c.sources.push_back({log_file_name(comp.id), d, comp});
    }
    c.channels = {
        {{"host0", ""}, {"nic0", ""}, Boundary::Pcie},
        {{"nic0", ""}, {"switch0", "dev0"}, Boundary::Eth},
        {{"switch0", "dev1"}, {"switch1", "dev0"}, Boundary::Eth},
        {{"switch1", "dev1"}, {"nic1", ""}, Boundary::Eth},
        {{"host1", ""}, {"nic1", ""}, Boundary::Pcie},
    };
    c.externals = {{"bulk0", {"switch0", "dev2"}}, {"sink0", {"switch1", "dev2"}}};
    c.routes = {{{"host0", "nic0", "switch0", "switch1", "nic1", "host1"}},
                {{"host1", "nic1", "switch1", "switch0", "nic0", "host0"}},
                {{"bulk0", "switch0", "switch1", "sink0"}}};
    c.exports = {{ExportFormat::Jaeger, "trace.json"}, {ExportFormat::Jsonl, "spans.jsonl"}};
    c.options.causality_window_ps = s_.window_ps;
    return c;
  }

  Scenario s_;
  Side client_;
  Side server_;
  StreamRng switch0_rng_;
  StreamRng switch1_rng_;
  StreamRng bulk_rng_;
  StreamRng workload_rng_;
  std::map<std::string, std::vector<Line>> lines_;
  std::map<std::string, std::uint64_t> last_arrival_;
  std::map<std::string, std::uint64_t> last_deq_;
  std::vector<RequestWindow> windows_;
  std::uint64_t next_pkt_ = 1;
  GroundTruth truth_;
};

using ojson = nlohmann::ordered_json;

[[noreturn]] void bad_truth(const std::string& message) {
  throw Error(ErrorCode::Format, "truth file: " + message);
}

}  // namespace

std::string_view to_string(ScenarioName name) {
  return name == ScenarioName::RpcNoload ? "rpc_noload" : "rpc_background";
}

std::optional<ScenarioName> scenario_from_string(std::string_view text) {
  if (text == "rpc_noload") return ScenarioName::RpcNoload;
  if (text == "rpc_background") return ScenarioName::RpcBackground;
  return std::nullopt;
}

void validate_scenario(const Scenario& s) {
  if (s.n_requests > kMaxRequests) {
    throw Error(ErrorCode::Config, "n_requests: " + std::to_string(s.n_requests) +
                                       " exceeds the limit of " + std::to_string(kMaxRequests));
  }
  if (s.window_ps == 0 || s.window_ps > 1'000'000 * kPicosPerMicro) {
    throw Error(ErrorCode::Config, "window_ps: must be in (0, 1 s]");
  }
  if (s.queueing_delta_ps > 1'000'000 * kPicosPerMicro) {
    throw Error(ErrorCode::Config, "queueing_delta_ps: must not exceed 1 s");
  }
}

StreamRng::StreamRng(std::uint64_t scenario_seed, std::string_view stream)
    : engine_(mix64(scenario_seed ^ fnv1a64(stream))) {}

std::uint64_t StreamRng::uniform(std::uint64_t lo, std::uint64_t hi) {
  if (hi <= lo) return lo;
  const std::uint64_t span = hi - lo;
  if (span == std::numeric_limits<std::uint64_t>::max()) return engine_();
  const std::uint64_t n = span + 1;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return lo + x % n;
  }
}

double StreamRng::unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::string log_file_name(std::string_view component) { return std::string(component) + ".log"; }

GeneratedScenario generate_scenario(const Scenario& scenario) {
  validate_scenario(scenario);
  return Builder(scenario).build();
}

GeneratedFiles write_scenario(const GeneratedScenario& generated, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
  GeneratedFiles files;
  files.dir = dir;
  for (const auto& [component, lines] : generated.logs) {
    std::string text;
    for (const auto& line : lines) {
      text += line;
      text += '\n';
    }
    auto path = dir / log_file_name(component);
    write_file_atomic(path, text);
    files.logs.push_back(path);
  }
  files.truth = dir / "truth.jsonl";
  write_file_atomic(files.truth, generated.truth.to_jsonl());
  files.wiring = dir / "wiring.json";
  write_file_atomic(files.wiring, dump_config(generated.config));
  files.symbols = dir / "host.sym";
  write_file_atomic(files.symbols, generated.symbols);
  return files;
}

GeneratedFiles generate(const Scenario& scenario, const std::filesystem::path& dir) {
  return write_scenario(generate_scenario(scenario), dir);
}

// ---------------------------------------------------------------------------
// Ground truth serialization

std::string GroundTruth::to_jsonl() const {
  std::string out;
  auto line = [&](const ojson& j) {
    out += j.dump();
    out += '\n';
  };
  ojson header;
  header["spanweave_truth"] = 1;
  header["scenario"] = std::string(to_string(scenario.name));
  header["seed"] = scenario.seed;
  header["n_requests"] = scenario.n_requests;
  header["queueing_delta_ps"] = scenario.queueing_delta_ps;
  header["window_ps"] = scenario.window_ps;
  line(header);
  for (const auto& t : traces) {
    ojson j;
    j["type"] = "trace";
    j["trace"] = t.id;
    j["label"] = t.label;
    line(j);
  }
  for (const auto& s : spans) {
    ojson j;
    j["type"] = "span";
    j["span"] = s.id;
    j["trace"] = s.trace;
    j["component"] = s.component;
    j["kind"] = std::string(to_string(s.kind));
    j["label"] = s.label;
    if (s.parent) {
      j["parent"] = *s.parent;
    } else {
      j["parent"] = nullptr;
    }
    line(j);
  }
  for (const auto& s : spans) {
    if (!s.parent) continue;
    ojson j;
    j["type"] = "edge";
    j["child"] = s.id;
    j["parent"] = *s.parent;
    line(j);
  }
  for (const auto& e : events) {
    ojson j;
    j["type"] = "event";
    j["component"] = e.component;
    j["seq"] = e.seq;
    j["span"] = e.span;
    line(j);
  }
  for (const auto& p : timings) {
    ojson j;
    j["type"] = "timing";
    j["request"] = p.request;
    j["direction"] = p.response ? "response" : "request";
    auto& dwell = j["dwell"] = ojson::array();
    for (const auto& [c, v] : p.dwell) dwell.push_back({{"component", c}, {"ps", v}});
    auto& links = j["links"] = ojson::array();
    for (const auto& [l, v] : p.links) links.push_back({{"link", l}, {"ps", v}});
    j["e2e_ps"] = p.e2e_ps;
    line(j);
  }
  for (const auto& p : packets) {
    ojson j;
    j["type"] = "packet";
    j["pkt"] = p.pkt;
    j["role"] = p.role;
    j["queue_delay_ps"] = p.queue_delay_ps;
    line(j);
  }
  return out;
}

GroundTruth GroundTruth::parse(std::string_view text) {
  GroundTruth truth;
  bool header = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (!header) {
        if (j.value("spanweave_truth", 0) != 1) bad_truth("missing header");
        auto name = scenario_from_string(j.at("scenario").get<std::string>());
        if (!name) bad_truth("unknown scenario");
        truth.scenario.name = *name;
        truth.scenario.seed = j.at("seed").get<std::uint64_t>();
        truth.scenario.n_requests = j.at("n_requests").get<std::uint64_t>();
        truth.scenario.queueing_delta_ps = j.at("queueing_delta_ps").get<std::uint64_t>();
        truth.scenario.window_ps = j.at("window_ps").get<std::uint64_t>();
        header = true;
        continue;
      }
      const auto type = j.at("type").get<std::string>();
      if (type == "trace") {
        truth.traces.push_back({j.at("trace").get<std::size_t>(), j.at("label").get<std::string>()});
      } else if (type == "span") {
        TruthSpan s;
        s.id = j.at("span").get<std::size_t>();
        s.trace = j.at("trace").get<std::size_t>();
        s.component = j.at("component").get<std::string>();
        auto kind = span_kind_from_string(j.at("kind").get<std::string>());
        if (!kind) bad_truth("unknown span kind");
        s.kind = *kind;
        s.label = j.at("label").get<std::string>();
        if (!j.at("parent").is_null()) s.parent = j.at("parent").get<std::size_t>();
        truth.spans.push_back(std::move(s));
      } else if (type == "event") {
        truth.events.push_back({j.at("component").get<std::string>(), j.at("seq").get<std::uint64_t>(),
                                j.at("span").get<std::size_t>()});
      } else if (type == "timing") {
        PathTiming p;
        p.request = j.at("request").get<std::uint64_t>();
        p.response = j.at("direction").get<std::string>() == "response";
        for (const auto& d : j.at("dwell")) {
          p.dwell.emplace_back(d.at("component").get<std::string>(), d.at("ps").get<std::uint64_t>());
        }
        for (const auto& l : j.at("links")) {
          p.links.emplace_back(l.at("link").get<std::string>(), l.at("ps").get<std::uint64_t>());
        }
        p.e2e_ps = j.at("e2e_ps").get<std::uint64_t>();
        truth.timings.push_back(std::move(p));
      } else if (type == "packet") {
        truth.packets.push_back({j.at("pkt").get<std::uint64_t>(), j.at("role").get<std::string>(),
                                 j.at("queue_delay_ps").get<std::uint64_t>()});
      } else if (type != "edge") {
        bad_truth("line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      bad_truth("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) bad_truth("empty file");
  return truth;
}

GroundTruth GroundTruth::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::map<std::string, std::uint64_t> GroundTruth::events_per_component() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : events) ++out[e.component];
  return out;
}

// ---------------------------------------------------------------------------
// Corruption

CorruptionReport corrupt(std::map<std::string, std::vector<std::string>>& logs,
                         const CorruptMode& mode, std::uint64_t seed) {
  CorruptionReport report;
  auto is_event_line = [](const std::string& line) { return line.find('=') != std::string::npos; };
  for (auto& [component, lines] : logs) {
    if (mode.kind == CorruptMode::Kind::DropFirstMatching && !mode.component.empty() &&
        component != mode.component) {
      continue;
    }
    StreamRng rng(seed, "corrupt/" + component);
    std::vector<std::string> kept;
    kept.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto& line = lines[i];
      if (!is_event_line(line)) {
        kept.push_back(std::move(line));
        continue;
      }
      switch (mode.kind) {
        case CorruptMode::Kind::DropLines:
          if (rng.unit() < mode.p) {
            report.dropped.push_back({component, i, line});
            continue;
          }
          break;
        case CorruptMode::Kind::GarbleLines:
          if (rng.unit() < mode.p) {
            report.garbled.push_back({component, i, line});
            const auto eq = line.find('=');
            auto end = line.find(' ', eq);
            if (end == std::string::npos) end = line.size();
            line.replace(eq + 1, end - eq - 1, "@@");
          }
          break;
        case CorruptMode::Kind::DropFirstMatching:
          if (report.dropped.empty() && line.find(mode.pattern) != std::string::npos) {
            report.dropped.push_back({component, i, line});
            continue;
          }
          break;
      }
      kept.push_back(std::move(line));
    }
    lines = std::move(kept);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Oracle comparison

TruthDiff compare_with_truth(const GroundTruth& truth, const std::vector<Trace>& traces) {
  using EventRef = std::pair<std::string, std::uint64_t>;
  TruthDiff diff;
  diff.truth_events = truth.events.size();
  diff.truth_spans = truth.spans.size();

  auto note = [&](std::string text) {
    if (diff.samples.size() < 10) diff.samples.push_back(std::move(text));
  };
  auto ref_text = [](const std::optional<EventRef>& r) {
    return r ? r->first + "#" + std::to_string(r->second) : std::string("none");
  };

  // Truth anchors: first event of each span, root span of each trace.
  std::vector<std::optional<EventRef>> t_anchor(truth.spans.size());
  std::map<EventRef, std::size_t> t_span_of;
  for (const auto& e : truth.events) {
    t_span_of[{e.component, e.seq}] = e.span;
    auto& a = t_anchor.at(e.span);
    if (!a || e.seq < a->second) a = EventRef{e.component, e.seq};
  }
  std::map<std::size_t, std::optional<EventRef>> t_trace_anchor;
  for (const auto& s : truth.spans) {
    if (!s.parent) t_trace_anchor.emplace(s.trace, t_anchor[s.id]);
  }

  // Reconstructed anchors.
  std::map<SpanId, const Span*> by_id;
  std::map<SpanId, EventRef> r_anchor;
  std::map<TraceId, EventRef> r_trace_anchor;
  std::map<EventRef, const Span*> r_span_of;
  std::map<EventRef, const Span*> r_by_anchor;
  for (const auto& trace : traces) {
    for (const auto& span : trace) {
      ++diff.reconstructed_spans;
      by_id[span.span_id] = &span;
      std::optional<EventRef> anchor;
      for (const auto& ev : span.events) {
        const EventRef ref{span.component.id, ev.seq};
        r_span_of[ref] = &span;
        if (!anchor || ev.seq < anchor->second) anchor = ref;
      }
      if (anchor) {
        r_anchor[span.span_id] = *anchor;
        r_by_anchor[*anchor] = &span;
      }
    }
    for (const auto& span : trace) {
      if (!span.parent_span_id && r_anchor.contains(span.span_id) &&
          !r_trace_anchor.contains(span.trace_id)) {
        r_trace_anchor[span.trace_id] = r_anchor[span.span_id];
      }
    }
  }

  for (const auto& e : truth.events) {
    const EventRef ref{e.component, e.seq};
    auto it = r_span_of.find(ref);
    if (it == r_span_of.end()) {
      ++diff.missing_events;
      note("event " + ref_text(ref) + " is in no span");
      continue;
    }
    const Span* span = it->second;
    const std::optional<EventRef> r_span_anchor = r_anchor.count(span->span_id)
                                                      ? std::optional(r_anchor[span->span_id])
                                                      : std::nullopt;
    if (r_span_anchor != t_anchor[e.span]) {
      ++diff.span_mismatches;
      note("event " + ref_text(ref) + " grouped with " + ref_text(r_span_anchor) + ", truth " +
           ref_text(t_anchor[e.span]));
    }
    const auto& ts = truth.spans.at(e.span);
    std::optional<EventRef> r_trace;
    if (auto tr = r_trace_anchor.find(span->trace_id); tr != r_trace_anchor.end()) {
      r_trace = tr->second;
    }
    if (r_trace != t_trace_anchor[ts.trace]) {
      ++diff.trace_mismatches;
      note("event " + ref_text(ref) + " in trace rooted at " + ref_text(r_trace) + ", truth " +
           ref_text(t_trace_anchor[ts.trace]));
    }
  }
  for (const auto& [ref, span] : r_span_of) {
    if (!t_span_of.contains(ref)) ++diff.extra_events;
  }

  for (const auto& s : truth.spans) {
    const auto& anchor = t_anchor[s.id];
    const Span* r = anchor && r_by_anchor.contains(*anchor) ? r_by_anchor[*anchor] : nullptr;
    if (r == nullptr) {
      ++diff.edge_mismatches;
      note("span " + s.label + " not reconstructed");
      continue;
    }
    std::optional<EventRef> r_parent;
    if (r->parent_span_id && r_anchor.contains(*r->parent_span_id)) {
      r_parent = r_anchor[*r->parent_span_id];
    }
    const std::optional<EventRef> t_parent = s.parent ? t_anchor[*s.parent] : std::nullopt;
    if (r_parent != t_parent) {
      ++diff.edge_mismatches;
      note("span " + s.label + " parent " + ref_text(r_parent) + ", truth " + ref_text(t_parent));
    }
  }
  return diff;
}

}  // namespace spanweave
