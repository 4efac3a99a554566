#pragma once

// Span weavers: group one component's events into spans and exchange trace
// contexts with neighbouring weavers over bounded per-direction channels.
//
// Ordering contract. Every event is identified by the key (ts, rank, seq),
// where rank is the component's position in the wiring config. Keys are a
// total order. A weaver's frontier is the key of its next unprocessed event;
// it never pushes a context whose key is below its frontier. A weaver may
// process an event only once every inbound peer's frontier is above the
// event's key, so the contexts it can observe are exactly those with smaller
// keys, independent of thread scheduling. The weaver holding the globally
// smallest pending key is always allowed to run.

#include <compare>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "spanweave/config.hpp"
#include "spanweave/event_model.hpp"

namespace spanweave {

struct EventKey {
  std::uint64_t ts = 0;
  std::uint32_t rank = 0;
  std::uint64_t seq = 0;

  static constexpr EventKey max() {
    return {std::numeric_limits<std::uint64_t>::max(), std::numeric_limits<std::uint32_t>::max(),
            std::numeric_limits<std::uint64_t>::max()};
  }
  /// Smallest key with a timestamp above `ts`: "everything at or before ts
  /// is settled".
  static constexpr EventKey after_ts(std::uint64_t ts) {
    return ts == std::numeric_limits<std::uint64_t>::max() ? max() : EventKey{ts + 1, 0, 0};
  }

  friend constexpr auto operator<=>(const EventKey&, const EventKey&) = default;
};

inline EventKey key_of(const Event& event, std::uint32_t rank) {
  return {event.ts.ticks, rank, event.seq};
}

/// Frontier bookkeeping shared by all weavers of one run.
class Coordinator {
 public:
  /// `inbound[r]` lists the ranks whose contexts weaver r consumes.
  explicit Coordinator(std::vector<std::vector<std::uint32_t>> inbound);

  /// Frontiers only move forward; returns whether this one did.
  bool publish(std::uint32_t rank, EventKey frontier);
  void finish(std::uint32_t rank) { publish(rank, EventKey::max()); }
  EventKey frontier(std::uint32_t rank) const;

  bool may_process(std::uint32_t rank, const EventKey& key) const;

  /// Blocks until may_process holds. Throws Error{ContractViolation} if every
  /// unfinished weaver is waiting on peers, Cancelled after cancel().
  void wait_ready(std::uint32_t rank, const EventKey& key);

  void cancel();

 private:
  bool ready_locked(std::uint32_t rank, const EventKey& key) const;

  std::vector<std::vector<std::uint32_t>> inbound_;
  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::vector<EventKey> frontier_;
  std::vector<std::optional<EventKey>> waiting_;
  std::size_t waiting_count_ = 0;
  bool cancelled_ = false;
};

/// One direction of a context channel. Bounded: when full, the oldest
/// context is evicted and reported back to the pusher as unmatched.
class ContextQueue {
 public:
  struct Entry {
    EventKey key;
    TraceContext ctx;
  };

  explicit ContextQueue(std::size_t capacity);

  std::optional<Entry> push(EventKey key, TraceContext ctx);

  /// First entry with key < `before` satisfying `pred`, left in place.
  std::optional<Entry> find(const EventKey& before,
                            const std::function<bool(const TraceContext&)>& pred) const;
  /// Removes the entry with exactly this key; empty if it was evicted.
  std::optional<Entry> take(const EventKey& key);

  std::size_t size() const;
  std::size_t peak() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t pushed() const;
  std::uint64_t evicted() const;
  std::uint64_t matched() const;

 private:
  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<Entry> entries_;
  std::size_t peak_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t evicted_ = 0;
  std::uint64_t matched_ = 0;
};

// Messages from weavers to the trace assembler.
struct SpanOpened {
  TraceId trace;
  SimTimestamp start;
  bool root = false;
};
struct SpanClosed {
  Span span;
};
struct ContextDelta {
  TraceId trace;
  int delta = 0;
};
struct Progress {
  std::uint32_t rank = 0;
  std::uint64_t ts = 0;  // no further span activity below this timestamp
};
struct WeaverDone {
  std::uint32_t rank = 0;
};
using AssemblerMsg = std::variant<SpanOpened, SpanClosed, ContextDelta, Progress, WeaverDone>;

struct WeaverCounters {
  std::uint64_t events = 0;
  std::uint64_t spans_opened = 0;
  std::uint64_t spans_closed = 0;
  std::uint64_t roots = 0;
  std::uint64_t contexts_pushed = 0;
  std::uint64_t contexts_matched = 0;
  std::uint64_t contexts_evicted = 0;
  std::uint64_t unmatched_spans = 0;
  std::uint64_t unmatched_completions = 0;
  std::uint64_t truncated_spans = 0;
  std::uint64_t key_mismatches = 0;
  std::uint64_t external_roots = 0;
  std::uint64_t peak_open_spans = 0;
};

/// A weaver's view of one neighbour.
struct WeaverLink {
  std::string peer;
  Boundary boundary = Boundary::Pcie;
  std::string local_dev;        // our port, network components only
  ContextQueue* in = nullptr;   // peer -> us; null for externals
  ContextQueue* out = nullptr;  // us -> peer; null for externals
  bool external = false;
};

struct WeaverSetup {
  ComponentRef component;
  std::uint32_t rank = 0;
  std::uint64_t window_ps = kDefaultCausalityWindowPs;
  std::vector<WeaverLink> links;
  std::vector<RouteSpec> routes;
};

class Weaver {
 public:
  explicit Weaver(WeaverSetup setup);
  virtual ~Weaver() = default;
  Weaver(const Weaver&) = delete;
  Weaver& operator=(const Weaver&) = delete;

  /// Caller guarantees the coordinator allows this event's key.
  void process(Event event);
  /// End of stream: flushes open spans and announces completion.
  void finish();

  std::vector<AssemblerMsg>& outbox() noexcept { return outbox_; }
  const WeaverCounters& counters() const noexcept { return counters_; }
  const ComponentRef& component() const noexcept { return setup_.component; }
  std::uint32_t rank() const noexcept { return setup_.rank; }
  std::size_t open_span_count() const noexcept { return open_.size(); }
  /// Key following the last processed event (a valid frontier while idle).
  EventKey idle_frontier() const noexcept { return idle_frontier_; }

 protected:
  struct Parent {
    TraceId trace;
    SpanId span = 0;
  };

  virtual void handle(Event event) = 0;
  virtual void before_flush() {}

  SpanId open(SpanKind kind, Event first, std::optional<Parent> parent);
  Span* find_open(SpanId id);
  void append(SpanId id, Event event);
  /// Closes at `end`; the span moves to the outbox.
  void close(SpanId id, SimTimestamp end);
  Parent parent_of(SpanId id) const;

  WeaverLink* link(Boundary boundary);
  WeaverLink* link_to(std::string_view peer);
  WeaverLink* link_by_dev(std::string_view dev);

  void push_context(WeaverLink& link, Parent parent, std::variant<PcieKey, EthKey> key);
  std::optional<TraceContext> take_context(WeaverLink& link,
                                           const std::function<bool(const TraceContext&)>& pred);
  std::optional<ContextQueue::Entry> peek_context(
      const WeaverLink& link, const std::function<bool(const TraceContext&)>& pred) const;
  std::optional<TraceContext> claim(WeaverLink& link, const ContextQueue::Entry& entry);

  const std::map<SpanId, Span>& open_spans() const noexcept { return open_; }
  /// Timestamp of the event being handled.
  SimTimestamp now() const noexcept { return SimTimestamp{current_key_.ts}; }
  std::uint64_t window() const noexcept { return setup_.window_ps; }
  const WeaverSetup& setup() const noexcept { return setup_; }
  std::vector<WeaverLink>& links() noexcept { return setup_.links; }

  struct Closed {
    Parent parent;
    SimTimestamp end;
  };
  const std::optional<Closed>& last_closed() const noexcept { return last_closed_; }

  WeaverCounters counters_;

 private:
  void emit(AssemblerMsg msg) { outbox_.push_back(std::move(msg)); }

  WeaverSetup setup_;
  std::map<SpanId, Span> open_;
  std::vector<AssemblerMsg> outbox_;
  EventKey current_key_;
  EventKey idle_frontier_{};
  std::uint64_t span_seq_ = 0;
  std::uint64_t root_seq_ = 0;
  std::uint64_t last_progress_ = 0;
  bool sent_progress_ = false;
  std::optional<SimTimestamp> last_ts_;
  std::optional<Closed> last_closed_;
};

std::unique_ptr<Weaver> make_weaver(WeaverSetup setup);

/// Collects spans per trace and releases whole traces once no weaver can
/// add to them any more, ordered by (root start, trace id).
class TraceAssembler {
 public:
  using Sink = std::function<void(std::vector<Span>&&)>;

  TraceAssembler(std::size_t weaver_count, std::uint64_t window_ps, Sink sink);

  void handle(AssemblerMsg&& msg);
  /// End of input: releases everything still held.
  void finish();

  std::uint64_t traces_emitted() const noexcept { return traces_emitted_; }
  std::uint64_t spans_emitted() const noexcept { return spans_emitted_; }
  std::size_t peak_pending_traces() const noexcept { return peak_pending_; }

 private:
  struct TraceState {
    std::vector<Span> spans;
    std::int64_t open = 0;
    std::int64_t inflight = 0;
    std::uint64_t max_end = 0;
    std::optional<SimTimestamp> root_start;
  };

  void release_ready();
  void emit(TraceId id);
  std::uint64_t global_progress() const;

  std::vector<std::uint64_t> progress_;
  std::uint64_t window_;
  Sink sink_;
  std::map<TraceId, TraceState> traces_;
  std::set<std::pair<std::uint64_t, TraceId>> order_;  // (root start, id)
  std::uint64_t traces_emitted_ = 0;
  std::uint64_t spans_emitted_ = 0;
  std::size_t peak_pending_ = 0;
};

/// Sort key used for spans within a trace.
bool span_order(const Span& a, const Span& b);

}  // namespace spanweave
