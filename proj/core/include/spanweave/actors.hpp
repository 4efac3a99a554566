#pragma once

// Stream actors: optional per-event transforms placed between a producer and
// its weaver.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spanweave/event_model.hpp"

namespace spanweave {

class Actor {
 public:
  virtual ~Actor() = default;
  /// Empty result drops the event.
  virtual std::optional<Event> process(Event event) = 0;
  virtual std::string_view name() const = 0;
};

class FilterKinds final : public Actor {
 public:
  enum class Mode { Keep, Drop };

  FilterKinds(std::set<EventKind> kinds, Mode mode = Mode::Keep)
      : kinds_(std::move(kinds)), mode_(mode) {}

  std::optional<Event> process(Event event) override;
  std::string_view name() const override { return "filter_kinds"; }

 private:
  std::set<EventKind> kinds_;
  Mode mode_;
};

/// Sorted (start address, name) table; lookups resolve to the greatest start
/// address not above the query.
class SymbolMap {
 public:
  SymbolMap() = default;
  /// Throws Error{Config} unless start addresses are strictly increasing.
  explicit SymbolMap(std::vector<std::pair<std::uint64_t, std::string>> entries);

  /// nm-style text: `0x<hex> <name>` per line, `#` comments, blank lines.
  static SymbolMap load(const std::filesystem::path& path);
  static SymbolMap parse(std::string_view text);

  std::optional<std::string_view> resolve(std::uint64_t addr) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::uint64_t, std::string>> entries_;
};

class ResolveSymbols final : public Actor {
 public:
  explicit ResolveSymbols(SymbolMap map) : map_(std::move(map)) {}

  std::optional<Event> process(Event event) override;
  std::string_view name() const override { return "resolve_symbols"; }

 private:
  SymbolMap map_;
};

class TimeWindow final : public Actor {
 public:
  /// Throws Error{WindowInverted} when lo > hi.
  TimeWindow(SimTimestamp lo, SimTimestamp hi);

  std::optional<Event> process(Event event) override;
  std::string_view name() const override { return "time_window"; }

 private:
  SimTimestamp lo_;
  SimTimestamp hi_;
};

/// Runs `events` through `actors` in order; handy for tests and tools.
std::vector<Event> apply_actors(std::vector<Event> events,
                                const std::vector<std::unique_ptr<Actor>>& actors);

}  // namespace spanweave
