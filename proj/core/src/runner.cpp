#include "spanweave/runner.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "spanweave/actors.hpp"
#include "spanweave/bounded_queue.hpp"
#include "spanweave/errors.hpp"
#include "spanweave/parsers.hpp"
#include "spanweave/weaver.hpp"

namespace spanweave {
namespace {

using EventQueue = BoundedQueue<Event>;
using MergeQueue = BoundedQueue<AssemblerMsg>;

constexpr int kStepBatch = 64;

bool is_named_pipe(const std::filesystem::path& path) {
  struct stat st {};
  return ::stat(path.c_str(), &st) == 0 && S_ISFIFO(st.st_mode);
}

std::unique_ptr<Actor> make_actor(const ActorSpec& spec) {
  if (spec.type == "filter_kinds") {
    if (!spec.drop.empty()) {
      return std::make_unique<FilterKinds>(std::set<EventKind>(spec.drop.begin(), spec.drop.end()),
                                           FilterKinds::Mode::Drop);
    }
    return std::make_unique<FilterKinds>(std::set<EventKind>(spec.keep.begin(), spec.keep.end()),
                                         FilterKinds::Mode::Keep);
  }
  if (spec.type == "resolve_symbols") {
    return std::make_unique<ResolveSymbols>(SymbolMap::load(spec.symbols));
  }
  if (spec.type == "time_window") return std::make_unique<TimeWindow>(spec.lo, spec.hi);
  throw Error(ErrorCode::Config, "unknown actor type '" + spec.type + "'");
}

/// Everything one run owns. Stage methods come in a non-blocking flavour
/// (step_*, used by the cooperative scheduler) and a blocking one (run_*,
/// one thread each).
class Graph {
 public:
  Graph(const WiringConfig& config, const TraceSink& sink)
      : config_(config),
        coordinator_(inbound_ranks(config)),
        merge_(config.options.queue_capacity),
        assembler_(config.components.size(), config.options.causality_window_ps,
                   [this](Trace&& t) { sink_(std::move(t)); }),
        sink_(sink) {
    const auto n = config.components.size();
    pipelines_.resize(n);
    for (const auto& source : config.sources) {
      if (!std::filesystem::exists(source.path)) {
        throw Error(ErrorCode::Io, "cannot open '" + source.path.string() + "': no such file",
                    source.component.id);
      }
      pipelines_[*config.rank_of(source.component.id)].source = source;
    }
    for (std::size_t r = 0; r < n; ++r) {
      auto& p = pipelines_[r];
      if (auto it = config.actors.find(config.components[r].id); it != config.actors.end()) {
        for (const auto& spec : it->second) p.actors.push_back(make_actor(spec));
      }
      for (std::size_t q = 0; q <= p.actors.size(); ++q) {
        p.queues.push_back(std::make_unique<EventQueue>(config.options.queue_capacity));
      }
      p.actor_pending.resize(p.actors.size());
      p.actor_done.resize(p.actors.size(), false);
    }
    build_weavers();
    weavers_left_ = n;
    if (n == 0) merge_.close();
  }

  // -- cooperative ---------------------------------------------------------

  void run_cooperative(std::optional<std::uint64_t> shuffle_seed) {
    struct StageRef {
      int type;  // 0 producer, 1 actor, 2 weaver, 3 exporter
      std::size_t rank;
      std::size_t index;
    };
    std::vector<StageRef> stages;
    for (std::size_t r = 0; r < pipelines_.size(); ++r) {
      stages.push_back({0, r, 0});
      for (std::size_t a = 0; a < pipelines_[r].actors.size(); ++a) stages.push_back({1, r, a});
      stages.push_back({2, r, 0});
    }
    stages.push_back({3, 0, 0});

    std::mt19937_64 rng(shuffle_seed.value_or(0));
    while (!exporter_done_) {
      if (shuffle_seed) std::shuffle(stages.begin(), stages.end(), rng);
      bool progress = false;
      for (const auto& s : stages) {
        switch (s.type) {
          case 0:
            progress |= step_producer(s.rank);
            break;
          case 1:
            progress |= step_actor(s.rank, s.index);
            break;
          case 2:
            progress |= step_weaver(s.rank);
            break;
          default:
            progress |= step_exporter();
            break;
        }
      }
      if (!progress && !exporter_done_) {
        throw Error(ErrorCode::ContractViolation, "no stage can make progress");
      }
    }
  }

  // -- concurrent ----------------------------------------------------------

  void run_concurrent() {
    std::vector<std::thread> threads;
    auto spawn = [&](auto fn) {
      threads.emplace_back([this, fn] {
        try {
          fn();
        } catch (const Cancelled&) {
        } catch (...) {
          fail(std::current_exception());
        }
      });
    };
    for (std::size_t r = 0; r < pipelines_.size(); ++r) {
      spawn([this, r] { run_producer(r); });
      for (std::size_t a = 0; a < pipelines_[r].actors.size(); ++a) {
        spawn([this, r, a] { run_actor(r, a); });
      }
      spawn([this, r] { run_weaver(r); });
    }
    spawn([this] { run_exporter(); });
    for (auto& t : threads) t.join();
    if (error_) std::rethrow_exception(error_);
  }

  RunStats stats() const {
    RunStats s;
    s.queue_capacity = config_.options.queue_capacity;
    s.channel_capacity = config_.options.channel_capacity;
    for (std::size_t r = 0; r < pipelines_.size(); ++r) {
      const auto& p = pipelines_[r];
      auto& cs = s.components[config_.components[r].id];
      if (p.stream) {
        const auto& c = p.stream->counters();
        cs.lines = c.lines;
        cs.events = c.events;
        cs.skipped = c.skipped;
        cs.parse_errors = c.parse_errors;
        if (!p.stream->errors().empty()) {
          auto& errs = s.errors[config_.components[r].id];
          const auto n = std::min<std::size_t>(p.stream->errors().size(), 16);
          errs.assign(p.stream->errors().begin(), p.stream->errors().begin() + n);
        }
      }
      s.lines += cs.lines;
      s.events_parsed += cs.events;
      s.skipped += cs.skipped;
      s.parse_errors += cs.parse_errors;
      for (const auto& q : p.queues) {
        s.peak_queue_occupancy = std::max<std::uint64_t>(s.peak_queue_occupancy, q->peak());
      }
      const auto& w = weavers_[r]->counters();
      cs.spans = w.spans_closed;
      s.events_woven += w.events;
      s.contexts_pushed += w.contexts_pushed;
      s.contexts_matched += w.contexts_matched;
      s.unmatched_spans += w.unmatched_spans;
      s.unmatched_completions += w.unmatched_completions;
      s.truncated_spans += w.truncated_spans;
      s.key_mismatches += w.key_mismatches;
      s.external_roots += w.external_roots;
      s.peak_open_spans += w.peak_open_spans;
    }
    s.contexts_unmatched = s.contexts_pushed - s.contexts_matched;
    for (const auto& c : channels_) {
      s.peak_channel_occupancy = std::max<std::uint64_t>(s.peak_channel_occupancy, c->peak());
    }
    s.peak_merge_occupancy = merge_.peak();
    s.spans_emitted = assembler_.spans_emitted();
    s.traces_emitted = assembler_.traces_emitted();
    return s;
  }

 private:
  struct Pipeline {
    LogSource source;
    std::unique_ptr<EventStream> stream;
    std::vector<std::unique_ptr<Actor>> actors;
    std::vector<std::unique_ptr<EventQueue>> queues;  // queues[i] feeds stage i+1
    std::optional<Event> producer_pending;
    bool producer_done = false;
    std::vector<std::optional<Event>> actor_pending;
    std::vector<bool> actor_done;
    std::optional<Event> weaver_current;
    std::size_t outbox_sent = 0;
    bool weaver_finished = false;
    bool weaver_done = false;
  };

  static std::vector<std::vector<std::uint32_t>> inbound_ranks(const WiringConfig& config) {
    std::vector<std::vector<std::uint32_t>> inbound(config.components.size());
    for (const auto& ch : config.channels) {
      const auto a = static_cast<std::uint32_t>(*config.rank_of(ch.a.component));
      const auto b = static_cast<std::uint32_t>(*config.rank_of(ch.b.component));
      inbound[a].push_back(b);
      inbound[b].push_back(a);
    }
    return inbound;
  }

  void build_weavers() {
    std::vector<WeaverSetup> setups(config_.components.size());
    for (std::size_t r = 0; r < setups.size(); ++r) {
      setups[r].component = config_.components[r];
      setups[r].rank = static_cast<std::uint32_t>(r);
      setups[r].window_ps = config_.options.causality_window_ps;
      setups[r].routes = config_.routes;
    }
    for (const auto& ch : config_.channels) {
      auto* ab = channels_.emplace_back(std::make_unique<ContextQueue>(config_.options.channel_capacity)).get();
      auto* ba = channels_.emplace_back(std::make_unique<ContextQueue>(config_.options.channel_capacity)).get();
      const auto a = *config_.rank_of(ch.a.component);
      const auto b = *config_.rank_of(ch.b.component);
      setups[a].links.push_back({ch.b.component, ch.boundary, ch.a.dev, ba, ab, false});
      setups[b].links.push_back({ch.a.component, ch.boundary, ch.b.dev, ab, ba, false});
    }
    for (const auto& ext : config_.externals) {
      const auto r = *config_.rank_of(ext.attach.component);
      setups[r].links.push_back({ext.id, Boundary::Eth, ext.attach.dev, nullptr, nullptr, true});
    }
    for (auto& setup : setups) weavers_.push_back(make_weaver(std::move(setup)));
  }

  StreamOptions stream_options() const { return StreamOptions{config_.options.reorder_buffer}; }

  void ensure_stream(Pipeline& p) {
    if (!p.stream) p.stream = std::make_unique<EventStream>(p.source, stream_options());
  }

  bool step_producer(std::size_t r) {
    auto& p = pipelines_[r];
    if (p.producer_done) return false;
    ensure_stream(p);
    bool progress = false;
    for (int i = 0; i < kStepBatch; ++i) {
      if (!p.producer_pending) {
        auto ev = p.stream->next();
        if (!ev) {
          p.queues.front()->close();
          p.producer_done = true;
          return true;
        }
        p.producer_pending = std::move(ev);
        progress = true;
      }
      if (!p.queues.front()->try_push(*p.producer_pending)) return progress;
      p.producer_pending.reset();
      progress = true;
    }
    return progress;
  }

  bool step_actor(std::size_t r, std::size_t a) {
    auto& p = pipelines_[r];
    if (p.actor_done[a]) return false;
    auto& in = *p.queues[a];
    auto& out = *p.queues[a + 1];
    auto& pending = p.actor_pending[a];
    bool progress = false;
    for (int i = 0; i < kStepBatch; ++i) {
      if (pending) {
        if (!out.try_push(*pending)) return progress;
        pending.reset();
        progress = true;
      }
      std::optional<Event> ev;
      const auto got = in.try_pop(ev);
      if (got == EventQueue::TryPop::Empty) return progress;
      if (got == EventQueue::TryPop::Closed) {
        out.close();
        p.actor_done[a] = true;
        return true;
      }
      pending = p.actors[a]->process(std::move(*ev));
      progress = true;
    }
    return progress;
  }

  /// Pushes outbox messages without blocking; true when all went out.
  bool flush_outbox_nonblocking(std::size_t r, bool& progress) {
    auto& p = pipelines_[r];
    auto& outbox = weavers_[r]->outbox();
    while (p.outbox_sent < outbox.size()) {
      if (!merge_.try_push(outbox[p.outbox_sent])) return false;
      ++p.outbox_sent;
      progress = true;
    }
    outbox.clear();
    p.outbox_sent = 0;
    return true;
  }

  void weaver_retired(std::size_t r) {
    pipelines_[r].weaver_done = true;
    if (--weavers_left_ == 0) merge_.close();
  }

  bool step_weaver(std::size_t r) {
    auto& p = pipelines_[r];
    auto& w = *weavers_[r];
    if (p.weaver_done) return false;
    bool progress = false;
    for (int i = 0; i < kStepBatch; ++i) {
      if (!flush_outbox_nonblocking(r, progress)) return progress;
      if (p.weaver_finished) {
        weaver_retired(r);
        return true;
      }
      auto& in = *p.queues.back();
      if (!p.weaver_current) {
        const auto got = in.try_pop(p.weaver_current);
        if (got == EventQueue::TryPop::Empty) {
          return coordinator_.publish(w.rank(), w.idle_frontier()) || progress;
        }
        if (got == EventQueue::TryPop::Closed) {
          w.finish();
          coordinator_.finish(w.rank());
          p.weaver_finished = true;
          progress = true;
          continue;
        }
        progress = true;
      }
      const EventKey key = key_of(*p.weaver_current, w.rank());
      progress |= coordinator_.publish(w.rank(), key);
      if (!coordinator_.may_process(w.rank(), key)) return progress;
      w.process(std::move(*p.weaver_current));
      p.weaver_current.reset();
      progress = true;
    }
    return progress;
  }

  bool step_exporter() {
    if (exporter_done_) return false;
    bool progress = false;
    for (int i = 0; i < kStepBatch * 4; ++i) {
      std::optional<AssemblerMsg> msg;
      const auto got = merge_.try_pop(msg);
      if (got == MergeQueue::TryPop::Empty) return progress;
      if (got == MergeQueue::TryPop::Closed) {
        assembler_.finish();
        exporter_done_ = true;
        return true;
      }
      assembler_.handle(std::move(*msg));
      progress = true;
    }
    return progress;
  }

  void run_producer(std::size_t r) {
    auto& p = pipelines_[r];
    ensure_stream(p);
    auto& out = *p.queues.front();
    while (auto ev = p.stream->next()) out.push(std::move(*ev));
    out.close();
  }

  void run_actor(std::size_t r, std::size_t a) {
    auto& p = pipelines_[r];
    auto& in = *p.queues[a];
    auto& out = *p.queues[a + 1];
    while (auto ev = in.pop()) {
      if (auto kept = p.actors[a]->process(std::move(*ev))) out.push(std::move(*kept));
    }
    out.close();
  }

  void flush_outbox_blocking(std::size_t r) {
    auto& outbox = weavers_[r]->outbox();
    for (auto& msg : outbox) merge_.push(std::move(msg));
    outbox.clear();
  }

  void run_weaver(std::size_t r) {
    auto& w = *weavers_[r];
    auto& in = *pipelines_[r].queues.back();
    for (;;) {
      std::optional<Event> ev;
      auto got = in.try_pop(ev);
      if (got == EventQueue::TryPop::Empty) {
        coordinator_.publish(w.rank(), w.idle_frontier());
        ev = in.pop();
        got = ev ? EventQueue::TryPop::Item : EventQueue::TryPop::Closed;
      }
      if (got == EventQueue::TryPop::Closed) break;
      const EventKey key = key_of(*ev, w.rank());
      coordinator_.publish(w.rank(), key);
      coordinator_.wait_ready(w.rank(), key);
      w.process(std::move(*ev));
      flush_outbox_blocking(r);
    }
    w.finish();
    coordinator_.finish(w.rank());
    flush_outbox_blocking(r);
    if (--weavers_left_ == 0) merge_.close();
  }

  void run_exporter() {
    while (auto msg = merge_.pop()) assembler_.handle(std::move(*msg));
    assembler_.finish();
    exporter_done_ = true;
  }

  void fail(std::exception_ptr error) {
    {
      std::lock_guard lock(error_mutex_);
      if (!error_) error_ = error;
    }
    for (auto& p : pipelines_) {
      for (auto& q : p.queues) q->cancel();
    }
    merge_.cancel();
    coordinator_.cancel();
  }

  const WiringConfig& config_;
  std::vector<Pipeline> pipelines_;
  std::vector<std::unique_ptr<ContextQueue>> channels_;
  std::vector<std::unique_ptr<Weaver>> weavers_;
  Coordinator coordinator_;
  MergeQueue merge_;
  TraceAssembler assembler_;
  const TraceSink& sink_;
  std::atomic<std::size_t> weavers_left_{0};
  std::atomic<bool> exporter_done_{false};
  std::mutex error_mutex_;
  std::exception_ptr error_;
};

}  // namespace

Execution resolve_execution(const WiringConfig& config, std::optional<Execution> requested) {
  const Execution mode = requested.value_or(config.options.execution);
  if (mode != Execution::Auto) return mode;
  if (config.online) return Execution::Concurrent;
  for (const auto& s : config.sources) {
    if (is_named_pipe(s.path)) return Execution::Concurrent;
  }
  return std::thread::hardware_concurrency() > 1 ? Execution::Concurrent
                                                 : Execution::SingleThreaded;
}

RunStats run_graph(const WiringConfig& config, const TraceSink& sink, const RunControl& control) {
  Graph graph(config, sink);
  if (resolve_execution(config, control.execution) == Execution::Concurrent) {
    graph.run_concurrent();
  } else {
    graph.run_cooperative(control.shuffle_seed);
  }
  return graph.stats();
}

RunStats build_and_run(const WiringConfig& config, const RunControl& control) {
  std::vector<std::unique_ptr<AtomicFile>> files;
  std::vector<std::unique_ptr<TraceWriter>> writers;
  for (const auto& spec : config.exports) {
    auto& file = files.emplace_back(std::make_unique<AtomicFile>(spec.path));
    if (spec.format == ExportFormat::Jaeger) {
      writers.push_back(std::make_unique<JaegerWriter>(file->stream()));
    } else {
      writers.push_back(std::make_unique<JsonlWriter>(file->stream()));
    }
  }
  const TraceSink sink = [&](Trace&& trace) {
    for (auto& w : writers) w->write(trace);
  };
  RunStats stats = run_graph(config, sink, control);
  for (auto& w : writers) w->finish();
  for (auto& f : files) f->commit();
  return stats;
}

std::string run_stats_json(const RunStats& s) {
  nlohmann::ordered_json j;
  j["events_parsed"] = s.events_parsed;
  j["events_woven"] = s.events_woven;
  j["lines"] = s.lines;
  j["skipped"] = s.skipped;
  j["parse_errors"] = s.parse_errors;
  j["spans_emitted"] = s.spans_emitted;
  j["traces_emitted"] = s.traces_emitted;
  j["contexts_pushed"] = s.contexts_pushed;
  j["contexts_matched"] = s.contexts_matched;
  j["unmatched"] = s.contexts_unmatched + s.unmatched_spans + s.unmatched_completions;
  j["contexts_unmatched"] = s.contexts_unmatched;
  j["unmatched_spans"] = s.unmatched_spans;
  j["unmatched_completions"] = s.unmatched_completions;
  j["truncated_spans"] = s.truncated_spans;
  j["key_mismatches"] = s.key_mismatches;
  j["external_roots"] = s.external_roots;
  j["peak_open_spans"] = s.peak_open_spans;
  j["peak_queue_occupancy"] = s.peak_queue_occupancy;
  j["peak_channel_occupancy"] = s.peak_channel_occupancy;
  j["peak_merge_occupancy"] = s.peak_merge_occupancy;
  j["queue_capacity"] = s.queue_capacity;
  j["channel_capacity"] = s.channel_capacity;
  auto& comps = j["components"] = nlohmann::ordered_json::object();
  for (const auto& [id, c] : s.components) {
    comps[id] = {{"lines", c.lines},
                 {"events", c.events},
                 {"skipped", c.skipped},
                 {"parse_errors", c.parse_errors},
                 {"spans", c.spans}};
  }
  if (!s.errors.empty()) {
    auto& errs = j["errors"] = nlohmann::ordered_json::object();
    for (const auto& [id, list] : s.errors) {
      auto& arr = errs[id] = nlohmann::ordered_json::array();
      for (const auto& e : list) arr.push_back({{"line", e.line_no}, {"reason", e.reason}});
    }
  }
  return j.dump(2);
}

}  // namespace spanweave
