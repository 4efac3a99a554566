#include "spanweave/weaver.hpp"

#include <algorithm>

#include "spanweave/bounded_queue.hpp"
#include "spanweave/errors.hpp"
#include "spanweave/ids.hpp"

namespace spanweave {

// ---------------------------------------------------------------------------
// Coordinator

Coordinator::Coordinator(std::vector<std::vector<std::uint32_t>> inbound)
    : inbound_(std::move(inbound)),
      frontier_(inbound_.size(), EventKey{}),
      waiting_(inbound_.size()) {}

bool Coordinator::publish(std::uint32_t rank, EventKey frontier) {
  bool wake = false;
  {
    std::lock_guard lock(mutex_);
    if (frontier <= frontier_[rank]) return false;
    frontier_[rank] = frontier;
    wake = waiting_count_ > 0;
  }
  if (wake) changed_.notify_all();
  return true;
}

EventKey Coordinator::frontier(std::uint32_t rank) const {
  std::lock_guard lock(mutex_);
  return frontier_[rank];
}

bool Coordinator::ready_locked(std::uint32_t rank, const EventKey& key) const {
  for (auto peer : inbound_[rank]) {
    if (!(frontier_[peer] > key)) return false;
  }
  return true;
}

bool Coordinator::may_process(std::uint32_t rank, const EventKey& key) const {
  std::lock_guard lock(mutex_);
  return ready_locked(rank, key);
}

void Coordinator::wait_ready(std::uint32_t rank, const EventKey& key) {
  std::unique_lock lock(mutex_);
  if (cancelled_) throw Cancelled();
  if (ready_locked(rank, key)) return;

  waiting_[rank] = key;
  ++waiting_count_;
  struct Unwait {
    Coordinator& self;
    std::uint32_t rank;
    ~Unwait() {
      self.waiting_[rank].reset();
      --self.waiting_count_;
    }
  } unwait{*this, rank};

  for (;;) {
    if (cancelled_) throw Cancelled();
    if (ready_locked(rank, key)) return;

    // Frontiers only move when an unfinished weaver makes progress. If all of
    // them are parked here with unsatisfied keys, nothing can ever change.
    std::size_t active = 0;
    bool stuck = true;
    for (std::uint32_t r = 0; r < frontier_.size(); ++r) {
      if (frontier_[r] == EventKey::max()) continue;
      ++active;
      if (!waiting_[r] || ready_locked(r, *waiting_[r])) stuck = false;
    }
    if (stuck && active == waiting_count_) {
      throw Error(ErrorCode::ContractViolation,
                  "all weavers are waiting on each other (rank " + std::to_string(rank) +
                      " at ts " + std::to_string(key.ts) + ")");
    }
    changed_.wait(lock);
  }
}

void Coordinator::cancel() {
  {
    std::lock_guard lock(mutex_);
    cancelled_ = true;
  }
  changed_.notify_all();
}

// ---------------------------------------------------------------------------
// ContextQueue

ContextQueue::ContextQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

std::optional<ContextQueue::Entry> ContextQueue::push(EventKey key, TraceContext ctx) {
  std::lock_guard lock(mutex_);
  std::optional<Entry> evicted;
  if (entries_.size() >= capacity_) {
    evicted = std::move(entries_.front());
    entries_.pop_front();
    ++evicted_;
  }
  entries_.push_back(Entry{key, std::move(ctx)});
  ++pushed_;
  peak_ = std::max(peak_, entries_.size());
  return evicted;
}

std::optional<ContextQueue::Entry> ContextQueue::find(
    const EventKey& before, const std::function<bool(const TraceContext&)>& pred) const {
  std::lock_guard lock(mutex_);
  for (const auto& entry : entries_) {
    if (!(entry.key < before)) break;
    if (pred(entry.ctx)) return entry;
  }
  return std::nullopt;
}

std::optional<ContextQueue::Entry> ContextQueue::take(const EventKey& key) {
  std::lock_guard lock(mutex_);
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->key == key) {
      Entry entry = std::move(*it);
      entries_.erase(it);
      ++matched_;
      return entry;
    }
    if (key < it->key) break;
  }
  return std::nullopt;
}

std::size_t ContextQueue::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t ContextQueue::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

std::uint64_t ContextQueue::pushed() const {
  std::lock_guard lock(mutex_);
  return pushed_;
}

std::uint64_t ContextQueue::evicted() const {
  std::lock_guard lock(mutex_);
  return evicted_;
}

std::uint64_t ContextQueue::matched() const {
  std::lock_guard lock(mutex_);
  return matched_;
}

// ---------------------------------------------------------------------------
// Weaver

Weaver::Weaver(WeaverSetup setup) : setup_(std::move(setup)) {}

void Weaver::process(Event event) {
  current_key_ = key_of(event, setup_.rank);
  last_ts_ = event.ts;
  ++counters_.events;
  handle(std::move(event));
  idle_frontier_ = EventKey{current_key_.ts, current_key_.rank, current_key_.seq + 1};

  const std::uint64_t granularity = std::max<std::uint64_t>(setup_.window_ps / 4, 1);
  if (!sent_progress_ || current_key_.ts - last_progress_ >= granularity) {
    emit(Progress{setup_.rank, current_key_.ts});
    last_progress_ = current_key_.ts;
    sent_progress_ = true;
  }
}

void Weaver::finish() {
  before_flush();
  const SimTimestamp end = last_ts_.value_or(SimTimestamp{});
  while (!open_.empty()) {
    auto it = open_.begin();
    it->second.attrs.insert_or_assign("truncated", true);
    ++counters_.truncated_spans;
    close(it->first, std::max(end, it->second.start_ts));
  }
  idle_frontier_ = EventKey::max();
  emit(WeaverDone{setup_.rank});
}

SpanId Weaver::open(SpanKind kind, Event first, std::optional<Parent> parent) {
  Span span;
  span.span_id = make_span_id(setup_.rank, span_seq_++);
  span.kind = kind;
  span.component = setup_.component;
  span.start_ts = first.ts;
  span.end_ts = first.ts;
  span.attrs = first.attrs;
  if (parent) {
    span.trace_id = parent->trace;
    span.parent_span_id = parent->span;
  } else {
    span.trace_id = make_trace_id(setup_.component.id, first.ts, root_seq_++);
    ++counters_.roots;
  }
  span.events.push_back(std::move(first));

  emit(SpanOpened{span.trace_id, span.start_ts, !parent.has_value()});
  ++counters_.spans_opened;
  const SpanId id = span.span_id;
  open_.emplace(id, std::move(span));
  counters_.peak_open_spans = std::max<std::uint64_t>(counters_.peak_open_spans, open_.size());
  return id;
}

Span* Weaver::find_open(SpanId id) {
  auto it = open_.find(id);
  return it == open_.end() ? nullptr : &it->second;
}

void Weaver::append(SpanId id, Event event) {
  if (auto* span = find_open(id)) span->events.push_back(std::move(event));
}

void Weaver::close(SpanId id, SimTimestamp end) {
  auto node = open_.extract(id);
  if (node.empty()) return;
  Span& span = node.mapped();
  span.end_ts = end;
  last_closed_ = Closed{Parent{span.trace_id, span.span_id}, end};
  ++counters_.spans_closed;
  emit(SpanClosed{std::move(span)});
}

Weaver::Parent Weaver::parent_of(SpanId id) const {
  auto it = open_.find(id);
  if (it == open_.end()) return Parent{};
  return Parent{it->second.trace_id, it->second.span_id};
}

WeaverLink* Weaver::link(Boundary boundary) {
  for (auto& l : setup_.links) {
    if (l.boundary == boundary && !l.external) return &l;
  }
  return nullptr;
}

WeaverLink* Weaver::link_to(std::string_view peer) {
  for (auto& l : setup_.links) {
    if (l.peer == peer) return &l;
  }
  return nullptr;
}

WeaverLink* Weaver::link_by_dev(std::string_view dev) {
  for (auto& l : setup_.links) {
    if (l.local_dev == dev) return &l;
  }
  return nullptr;
}

void Weaver::push_context(WeaverLink& link, Parent parent, std::variant<PcieKey, EthKey> key) {
  if (link.out == nullptr) return;
  TraceContext ctx;
  ctx.trace_id = parent.trace;
  ctx.parent_span_id = parent.span;
  ctx.origin = setup_.component.id;
  ctx.boundary = link.boundary;
  ctx.key = std::move(key);
  ctx.ts = now();
  emit(ContextDelta{ctx.trace_id, +1});
  ++counters_.contexts_pushed;
  if (auto evicted = link.out->push(current_key_, std::move(ctx))) {
    ++counters_.contexts_evicted;
    emit(ContextDelta{evicted->ctx.trace_id, -1});
  }
}

std::optional<ContextQueue::Entry> Weaver::peek_context(
    const WeaverLink& link, const std::function<bool(const TraceContext&)>& pred) const {
  if (link.in == nullptr) return std::nullopt;
  return link.in->find(current_key_, pred);
}

std::optional<TraceContext> Weaver::claim(WeaverLink& link, const ContextQueue::Entry& entry) {
  auto taken = link.in->take(entry.key);
  if (!taken) return std::nullopt;
  ++counters_.contexts_matched;
  emit(ContextDelta{taken->ctx.trace_id, -1});
  return std::move(taken->ctx);
}

std::optional<TraceContext> Weaver::take_context(
    WeaverLink& link, const std::function<bool(const TraceContext&)>& pred) {
  // The sender may evict between find and take; retry on the next match.
  for (;;) {
    auto entry = peek_context(link, pred);
    if (!entry) return std::nullopt;
    if (auto ctx = claim(link, *entry)) return ctx;
  }
}

// ---------------------------------------------------------------------------
// TraceAssembler

bool span_order(const Span& a, const Span& b) {
  if (a.start_ts != b.start_ts) return a.start_ts < b.start_ts;
  return a.span_id < b.span_id;
}

TraceAssembler::TraceAssembler(std::size_t weaver_count, std::uint64_t window_ps, Sink sink)
    : progress_(weaver_count, 0), window_(window_ps), sink_(std::move(sink)) {}

std::uint64_t TraceAssembler::global_progress() const {
  std::uint64_t p = std::numeric_limits<std::uint64_t>::max();
  for (auto v : progress_) p = std::min(p, v);
  return p;
}

void TraceAssembler::handle(AssemblerMsg&& msg) {
  std::visit(
      [&](auto&& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SpanOpened>) {
          auto& st = traces_[m.trace];
          ++st.open;
          if (m.root && !st.root_start) {
            st.root_start = m.start;
            order_.emplace(m.start.ticks, m.trace);
          }
        } else if constexpr (std::is_same_v<T, SpanClosed>) {
          auto& st = traces_[m.span.trace_id];
          --st.open;
          st.max_end = std::max(st.max_end, m.span.end_ts.ticks);
          st.spans.push_back(std::move(m.span));
        } else if constexpr (std::is_same_v<T, ContextDelta>) {
          traces_[m.trace].inflight += m.delta;
        } else if constexpr (std::is_same_v<T, Progress>) {
          progress_[m.rank] = std::max(progress_[m.rank], m.ts);
        } else {
          progress_[m.rank] = std::numeric_limits<std::uint64_t>::max();
        }
      },
      std::move(msg));
  peak_pending_ = std::max(peak_pending_, traces_.size());
  release_ready();
}

void TraceAssembler::release_ready() {
  const std::uint64_t progress = global_progress();
  const bool all_done = progress == std::numeric_limits<std::uint64_t>::max();
  while (!order_.empty()) {
    const auto [start, id] = *order_.begin();
    if (!all_done && start >= progress) return;
    const auto& st = traces_[id];
    const std::uint64_t horizon =
        st.max_end > std::numeric_limits<std::uint64_t>::max() - window_
            ? std::numeric_limits<std::uint64_t>::max()
            : st.max_end + window_;
    const bool complete = st.open == 0 && st.inflight == 0 && progress > horizon;
    if (!all_done && !complete) return;
    if (all_done && st.open != 0) return;
    emit(id);
  }
}

void TraceAssembler::emit(TraceId id) {
  auto node = traces_.extract(id);
  auto& st = node.mapped();
  if (st.root_start) order_.erase({st.root_start->ticks, id});
  std::sort(st.spans.begin(), st.spans.end(), span_order);
  ++traces_emitted_;
  spans_emitted_ += st.spans.size();
  sink_(std::move(st.spans));
}

void TraceAssembler::finish() {
  while (!order_.empty()) emit(order_.begin()->second);
  // Traces whose root never arrived cannot occur with well-behaved weavers;
  // release them anyway so no span is lost.
  while (!traces_.empty()) {
    auto it = traces_.begin();
    if (it->second.spans.empty()) {
      traces_.erase(it);
      continue;
    }
    emit(it->first);
  }
}

}  // namespace spanweave
