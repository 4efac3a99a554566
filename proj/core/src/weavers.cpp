#include <algorithm>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "spanweave/errors.hpp"
#include "spanweave/weaver.hpp"

namespace spanweave {
namespace {

std::uint64_t uint_or(const Event& e, std::string_view name, std::uint64_t fallback = 0) {
  if (auto v = get_uint(e.attrs, name)) return *v;
  return fallback;
}

std::uint64_t hex_or(const Event& e, std::string_view name, std::uint64_t fallback = 0) {
  if (auto v = get_hex(e.attrs, name)) return *v;
  return fallback;
}

std::string unit_of(const Event& e) {
  if (auto v = get_ident(e.attrs, "unit")) return std::string(*v);
  return {};
}

// ---------------------------------------------------------------------------

class HostWeaver final : public Weaver {
 public:
  using Weaver::Weaver;

 protected:
  void handle(Event e) override {
    switch (e.kind) {
      case EventKind::HostSyscallEnter:
        return on_syscall(std::move(e));
      case EventKind::HostSyscallExit:
        return on_sysret(std::move(e));
      case EventKind::HostMmioRead:
      case EventKind::HostMmioWrite:
        return on_mmio(std::move(e));
      case EventKind::HostMmioCompleteRead:
      case EventKind::HostMmioCompleteWrite:
        return complete(mmio_by_id_, std::move(e));
      case EventKind::HostDmaRead:
      case EventKind::HostDmaWrite:
        return on_dma(std::move(e));
      case EventKind::HostDmaComplete:
        return complete(dma_by_id_, std::move(e));
      case EventKind::HostMsiX:
        return on_msix(std::move(e));
      case EventKind::HostIntPost:
        return on_int_post(std::move(e));
      case EventKind::HostIntClear:
        return on_int_clear(std::move(e));
      case EventKind::HostPciConfig:
        return on_pci_config(std::move(e));
      default:
        return attach_activity(std::move(e));
    }
  }

  void before_flush() override {
    for (auto& [name, unit] : units_) {
      if (!unit.activity) continue;
      const SpanId id = *unit.activity;
      const Span* span = find_open(id);
      const SimTimestamp end = span->events.back().ts;
      forget(unit, id);
      close(id, end);
    }
  }

 private:
  struct Unit {
    std::vector<SpanId> open_order;
    std::vector<SpanId> syscalls;
    std::optional<SpanId> activity;
  };

  struct Wakeup {
    Parent parent;
    std::optional<SimTimestamp> closed_at;
  };

  struct Interrupt {
    std::uint64_t vec;
    SpanId id;
  };

  static void erase_id(std::vector<SpanId>& ids, SpanId id) {
    ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
  }

  void forget(Unit& unit, SpanId id) {
    erase_id(unit.open_order, id);
    erase_id(unit.syscalls, id);
    if (unit.activity == id) unit.activity.reset();
  }

  SpanId open_on(Unit& unit, SpanKind kind, Event e, std::optional<Parent> parent) {
    const SpanId id = open(kind, std::move(e), parent);
    unit.open_order.push_back(id);
    return id;
  }

  void close_on(Unit& unit, SpanId id, Event closing) {
    const SimTimestamp end = closing.ts;
    append(id, std::move(closing));
    forget(unit, id);
    close(id, end);
  }

  void close_activity(Unit& unit) {
    if (!unit.activity) return;
    const SpanId id = *unit.activity;
    const SimTimestamp end = find_open(id)->events.back().ts;
    forget(unit, id);
    close(id, end);
  }

  /// Innermost open syscall, else the unit's activity span.
  std::optional<Parent> device_parent(const Unit& unit) const {
    if (!unit.syscalls.empty()) return parent_of(unit.syscalls.back());
    if (unit.activity) return parent_of(*unit.activity);
    return std::nullopt;
  }

  void on_syscall(Event e) {
    Unit& unit = units_[unit_of(e)];
    close_activity(unit);
    std::optional<Parent> parent;
    if (!unit.syscalls.empty()) {
      parent = parent_of(unit.syscalls.back());
    } else {
      parent = take_wakeup(e.ts);
    }
    const SpanId id = open_on(unit, SpanKind::HostSyscall, std::move(e), parent);
    unit.syscalls.push_back(id);
  }

  std::optional<Parent> take_wakeup(SimTimestamp ts) {
    while (!wakeups_.empty()) {
      Wakeup w = wakeups_.front();
      wakeups_.pop_front();
      if (!w.closed_at || ts.ticks - w.closed_at->ticks <= window()) return w.parent;
    }
    return std::nullopt;
  }

  void on_sysret(Event e) {
    Unit& unit = units_[unit_of(e)];
    if (unit.syscalls.empty()) {
      ++counters_.unmatched_completions;
      return;
    }
    const SpanId id = unit.syscalls.back();
    const Span* span = find_open(id);
    if (get_uint(span->attrs, "num") != get_uint(e.attrs, "num")) ++counters_.key_mismatches;
    close_on(unit, id, std::move(e));
  }

  void on_mmio(Event e) {
    Unit& unit = units_[unit_of(e)];
    const auto parent = device_parent(unit);
    PcieKey key{PcieOp::Mmio, hex_or(e, "addr"), uint_or(e, "size"), uint_or(e, "id"), 0};
    const std::uint64_t id_attr = key.id;
    const SpanId id = open_on(unit, SpanKind::HostMmio, std::move(e), parent);
    remember(mmio_by_id_, id_attr, id);
    if (auto* l = link(Boundary::Pcie)) push_context(*l, parent_of(id), key);
  }

  void remember(std::map<std::uint64_t, SpanId>& table, std::uint64_t key, SpanId id) {
    auto [it, inserted] = table.try_emplace(key, id);
    if (!inserted) {
      ++counters_.key_mismatches;
      it->second = id;
    }
  }

  void complete(std::map<std::uint64_t, SpanId>& table, Event e) {
    auto it = table.find(uint_or(e, "id"));
    if (it == table.end()) {
      ++counters_.unmatched_completions;
      return;
    }
    const SpanId id = it->second;
    table.erase(it);
    const std::string unit_name = find_open(id)->attrs.contains("unit")
                                      ? std::string(*get_ident(find_open(id)->attrs, "unit"))
                                      : std::string{};
    close_on(units_[unit_name], id, std::move(e));
  }

  void on_dma(Event e) {
    Unit& unit = units_[unit_of(e)];
    const PcieOp op = e.kind == EventKind::HostDmaRead ? PcieOp::DmaRead : PcieOp::DmaWrite;
    std::optional<Parent> parent;
    if (auto* l = link(Boundary::Pcie)) {
      auto ctx = take_context(*l, [&](const TraceContext& c) {
        const auto* k = std::get_if<PcieKey>(&c.key);
        return k != nullptr && k->op == op;
      });
      if (ctx) {
        const auto& k = std::get<PcieKey>(ctx->key);
        if (k.addr != hex_or(e, "addr") || k.size != uint_or(e, "size")) ++counters_.key_mismatches;
        parent = Parent{ctx->trace_id, ctx->parent_span_id};
      }
    }
    if (!parent) ++counters_.unmatched_spans;
    const std::uint64_t id_attr = uint_or(e, "id");
    const SpanId id = open_on(unit, SpanKind::HostDma, std::move(e), parent);
    remember(dma_by_id_, id_attr, id);
  }

  void on_msix(Event e) {
    Unit& unit = units_[unit_of(e)];
    const std::uint64_t vec = uint_or(e, "vec");
    std::optional<Parent> parent;
    if (auto* l = link(Boundary::Pcie)) {
      auto ctx = take_context(*l, [&](const TraceContext& c) {
        const auto* k = std::get_if<PcieKey>(&c.key);
        return k != nullptr && k->op == PcieOp::Interrupt && k->vec == vec;
      });
      if (ctx) parent = Parent{ctx->trace_id, ctx->parent_span_id};
    }
    if (!parent) ++counters_.unmatched_spans;
    const SpanId id = open_on(unit, SpanKind::HostInterrupt, std::move(e), parent);
    interrupts_.push_back({vec, id});
    wakeups_.push_back({parent_of(id), std::nullopt});
  }

  std::vector<Interrupt>::iterator oldest_interrupt(std::uint64_t vec) {
    return std::find_if(interrupts_.begin(), interrupts_.end(),
                        [&](const Interrupt& i) { return i.vec == vec; });
  }

  void on_int_post(Event e) {
    auto it = oldest_interrupt(uint_or(e, "vec"));
    if (it == interrupts_.end()) return attach_activity(std::move(e));
    append(it->id, std::move(e));
  }

  void on_int_clear(Event e) {
    auto it = oldest_interrupt(uint_or(e, "vec"));
    if (it == interrupts_.end()) {
      ++counters_.unmatched_completions;
      return;
    }
    const SpanId id = it->id;
    interrupts_.erase(it);
    for (auto& w : wakeups_) {
      if (w.parent.span == id) w.closed_at = e.ts;
    }
    const std::string unit_name(get_ident(find_open(id)->attrs, "unit").value_or(""));
    close_on(units_[unit_name], id, std::move(e));
  }

  void on_pci_config(Event e) {
    Unit& unit = units_[unit_of(e)];
    const auto parent = device_parent(unit);
    const SimTimestamp ts = e.ts;
    const SpanId id = open_on(unit, SpanKind::HostPciConfig, std::move(e), parent);
    forget(unit, id);
    close(id, ts);
  }

  void attach_activity(Event e) {
    Unit& unit = units_[unit_of(e)];
    if (!unit.open_order.empty()) return append(unit.open_order.back(), std::move(e));
    const SpanId id = open_on(unit, SpanKind::HostCpuActivity, std::move(e), std::nullopt);
    unit.activity = id;
  }

  std::map<std::string, Unit> units_;
  std::map<std::uint64_t, SpanId> mmio_by_id_;
  std::map<std::uint64_t, SpanId> dma_by_id_;
  std::vector<Interrupt> interrupts_;
  std::deque<Wakeup> wakeups_;
};

// ---------------------------------------------------------------------------

class NicWeaver final : public Weaver {
 public:
  using Weaver::Weaver;

 protected:
  void handle(Event e) override {
    switch (e.kind) {
      case EventKind::NicMmioRead:
      case EventKind::NicMmioWrite:
        return on_mmio(std::move(e));
      case EventKind::NicMmioComplete:
        return complete(mmio_by_id_, std::move(e));
      case EventKind::NicDmaIssueRead:
      case EventKind::NicDmaIssueWrite:
        return on_dma(std::move(e));
      case EventKind::NicDmaComplete:
        return complete(dma_by_id_, std::move(e));
      case EventKind::NicTx:
        return on_tx(std::move(e));
      case EventKind::NicRx:
        return on_rx(std::move(e));
      case EventKind::NicMsiXIssue:
        return on_msix(std::move(e));
      default:
        return;
    }
  }

 private:
  void on_mmio(Event e) {
    const std::uint64_t addr = hex_or(e, "addr");
    const std::uint64_t size = uint_or(e, "size");
    std::optional<Parent> parent;
    if (auto* l = link(Boundary::Pcie)) {
      auto is_mmio = [](const TraceContext& c) {
        const auto* k = std::get_if<PcieKey>(&c.key);
        return k != nullptr && k->op == PcieOp::Mmio;
      };
      auto ctx = take_context(*l, [&](const TraceContext& c) {
        return is_mmio(c) && std::get<PcieKey>(c.key).addr == addr &&
               std::get<PcieKey>(c.key).size == size;
      });
      if (!ctx) {
        ctx = take_context(*l, is_mmio);
        if (ctx) ++counters_.key_mismatches;
      }
      if (ctx) parent = Parent{ctx->trace_id, ctx->parent_span_id};
    }
    if (!parent) ++counters_.unmatched_spans;
    const std::uint64_t id_attr = uint_or(e, "id");
    const SpanId id = open(SpanKind::NicMmioSpan, std::move(e), parent);
    remember(mmio_by_id_, id_attr, id);
  }

  void remember(std::map<std::uint64_t, SpanId>& table, std::uint64_t key, SpanId id) {
    auto [it, inserted] = table.try_emplace(key, id);
    if (!inserted) {
      ++counters_.key_mismatches;
      it->second = id;
    }
  }

  void complete(std::map<std::uint64_t, SpanId>& table, Event e) {
    auto it = table.find(uint_or(e, "id"));
    if (it == table.end()) {
      ++counters_.unmatched_completions;
      return;
    }
    const SpanId id = it->second;
    table.erase(it);
    const SimTimestamp end = e.ts;
    append(id, std::move(e));
    close(id, end);
  }

  /// Most recently opened open span, else the most recently closed one if it
  /// ended within the causality window.
  std::optional<Parent> causal_parent(SimTimestamp ts) const {
    if (!open_spans().empty()) {
      const Span& s = open_spans().rbegin()->second;
      return Parent{s.trace_id, s.span_id};
    }
    if (const auto& c = last_closed(); c && ts.ticks - c->end.ticks <= window()) return c->parent;
    return std::nullopt;
  }

  void on_dma(Event e) {
    const auto parent = causal_parent(e.ts);
    PcieKey key{e.kind == EventKind::NicDmaIssueRead ? PcieOp::DmaRead : PcieOp::DmaWrite,
                hex_or(e, "addr"), uint_or(e, "size"), uint_or(e, "id"), 0};
    const SpanId id = open(SpanKind::NicDmaSpan, std::move(e), parent);
    remember(dma_by_id_, key.id, id);
    if (auto* l = link(Boundary::Pcie)) push_context(*l, parent_of(id), key);
  }

  void on_tx(Event e) {
    const auto parent = causal_parent(e.ts);
    const EthKey key{uint_or(e, "len"), std::nullopt};
    const SimTimestamp ts = e.ts;
    const SpanId id = open(SpanKind::NicTxSpan, std::move(e), parent);
    if (auto* l = link(Boundary::Eth)) push_context(*l, parent_of(id), key);
    close(id, ts);
  }

  void on_rx(Event e) {
    if (rx_) {
      const SpanId prev = *rx_;
      rx_.reset();
      if (const Span* s = find_open(prev)) close(prev, s->events.back().ts);
    }
    std::optional<Parent> parent;
    if (auto* l = link(Boundary::Eth)) {
      auto ctx = take_context(*l, [](const TraceContext& c) {
        return std::holds_alternative<EthKey>(c.key);
      });
      if (ctx) {
        if (std::get<EthKey>(ctx->key).len != uint_or(e, "len")) ++counters_.key_mismatches;
        parent = Parent{ctx->trace_id, ctx->parent_span_id};
      }
    }
    if (!parent) ++counters_.unmatched_spans;
    rx_ = open(SpanKind::NicRxSpan, std::move(e), parent);
  }

  void on_msix(Event e) {
    const std::uint64_t vec = uint_or(e, "vec");
    const SimTimestamp ts = e.ts;
    SpanId target;
    if (!open_spans().empty()) {
      target = open_spans().rbegin()->first;
      append(target, std::move(e));
    } else {
      target = open(SpanKind::NicRxSpan, std::move(e), std::nullopt);
      find_open(target)->attrs.insert_or_assign("interrupt_only", true);
      rx_ = target;
    }
    if (auto* l = link(Boundary::Pcie)) {
      push_context(*l, parent_of(target), PcieKey{PcieOp::Interrupt, 0, 0, 0, vec});
    }
    if (rx_ == target) {
      rx_.reset();
      close(target, ts);
    }
  }

  std::map<std::uint64_t, SpanId> mmio_by_id_;
  std::map<std::uint64_t, SpanId> dma_by_id_;
  std::optional<SpanId> rx_;
};

// ---------------------------------------------------------------------------

class NetWeaver final : public Weaver {
 public:
  using Weaver::Weaver;

 protected:
  void handle(Event e) override {
    const auto node = get_ident(e.attrs, "node").value_or("");
    const auto dev = get_ident(e.attrs, "dev").value_or("");
    if (node != component().id) {
      throw Error(ErrorCode::UnknownDevice,
                  "event names node '" + std::string(node) + "' in the log of '" +
                      component().id + "'",
                  component().id);
    }
    WeaverLink* egress = link_by_dev(dev);
    if (egress == nullptr) {
      throw Error(ErrorCode::UnknownDevice,
                  "device '" + std::string(node) + "/" + std::string(dev) +
                      "' is not in the wiring config",
                  component().id);
    }
    switch (e.kind) {
      case EventKind::NetEnqueue:
        return on_enqueue(std::move(e), *egress);
      case EventKind::NetDequeue:
      case EventKind::NetDrop:
        return on_leave(std::move(e), *egress);
      default:
        return;
    }
  }

 private:
  /// Neighbours a packet leaving towards `egress` can have arrived from:
  /// the previous hop of every route passing through here towards it,
  /// else every other neighbour.
  std::vector<WeaverLink*> ingress_candidates(const WeaverLink& egress) {
    std::vector<WeaverLink*> out;
    auto add = [&](WeaverLink* l) {
      if (l != nullptr && std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    };
    for (const auto& route : setup().routes) {
      for (std::size_t i = 1; i + 1 < route.hops.size(); ++i) {
        if (route.hops[i] == component().id && route.hops[i + 1] == egress.peer) {
          add(link_to(route.hops[i - 1]));
        }
      }
    }
    if (out.empty()) {
      for (auto& l : links()) {
        if (&l != &egress) add(&l);
      }
    }
    return out;
  }

  void on_enqueue(Event e, WeaverLink& egress) {
    const std::uint64_t pkt = uint_or(e, "pkt");
    const std::uint64_t len = uint_or(e, "len");
    auto matches = [&](const TraceContext& c) {
      const auto* k = std::get_if<EthKey>(&c.key);
      if (k == nullptr) return false;
      return k->pkt ? *k->pkt == pkt : k->len == len;
    };
    auto any_eth = [](const TraceContext& c) { return std::holds_alternative<EthKey>(c.key); };

    const auto candidates = ingress_candidates(egress);
    WeaverLink* best_link = nullptr;
    std::optional<ContextQueue::Entry> best;
    bool external = false;
    for (auto* l : candidates) {
      if (l->external) {
        external = true;
        continue;
      }
      auto entry = peek_context(*l, matches);
      if (entry && (!best || entry->key < best->key)) {
        best = std::move(entry);
        best_link = l;
      }
    }

    std::optional<Parent> parent;
    bool from_external = false;
    if (best) {
      if (auto ctx = claim(*best_link, *best)) parent = Parent{ctx->trace_id, ctx->parent_span_id};
    } else if (external) {
      from_external = true;
      ++counters_.external_roots;
    } else {
      for (auto* l : candidates) {
        auto entry = peek_context(*l, any_eth);
        if (entry && (!best || entry->key < best->key)) {
          best = std::move(entry);
          best_link = l;
        }
      }
      if (best) {
        if (auto ctx = claim(*best_link, *best)) {
          parent = Parent{ctx->trace_id, ctx->parent_span_id};
          ++counters_.key_mismatches;
        }
      }
    }
    if (!parent && !from_external) ++counters_.unmatched_spans;

    const SpanId id = open(SpanKind::NetHop, std::move(e), parent);
    if (from_external) find_open(id)->attrs.insert_or_assign("external", true);
    auto [it, inserted] = hops_.try_emplace(pkt, id);
    if (!inserted) {
      ++counters_.key_mismatches;
      it->second = id;
    }
  }

  void on_leave(Event e, WeaverLink& egress) {
    const std::uint64_t pkt = uint_or(e, "pkt");
    auto it = hops_.find(pkt);
    if (it == hops_.end()) {
      ++counters_.unmatched_completions;
      return;
    }
    const SpanId id = it->second;
    hops_.erase(it);
    const bool dropped = e.kind == EventKind::NetDrop;
    const SimTimestamp ts = e.ts;
    const EthKey key{uint_or(e, "len"), pkt};
    append(id, std::move(e));
    if (dropped) {
      find_open(id)->attrs.insert_or_assign("dropped", true);
    } else if (!egress.external) {
      push_context(egress, parent_of(id), key);
    }
    close(id, ts);
  }

  std::map<std::uint64_t, SpanId> hops_;
};

}  // namespace

std::unique_ptr<Weaver> make_weaver(WeaverSetup setup) {
  switch (setup.component.type) {
    case ComponentType::Host:
      return std::make_unique<HostWeaver>(std::move(setup));
    case ComponentType::Nic:
      return std::make_unique<NicWeaver>(std::move(setup));
    case ComponentType::Network:
      return std::make_unique<NetWeaver>(std::move(setup));
  }
  return nullptr;
}

}  // namespace spanweave
