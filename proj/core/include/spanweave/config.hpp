#pragma once

// Declarative wiring: which log feeds which component, how components are
// connected, how packets are routed and where the export goes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spanweave/event_model.hpp"
#include "spanweave/parsers.hpp"

namespace spanweave {

inline constexpr std::size_t kDefaultQueueCapacity = 4096;
inline constexpr std::size_t kDefaultChannelCapacity = 65536;
inline constexpr std::uint64_t kDefaultCausalityWindowPs = 10 * kPicosPerMicro;

struct Endpoint {
  std::string component;
  std::string dev;  // network devices only

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

struct ChannelSpec {
  Endpoint a;
  Endpoint b;
  Boundary boundary = Boundary::Pcie;
};

/// Traffic source or sink outside the traced system, attached to a switch
/// port (e.g. a bulk sender).
struct ExternalSpec {
  std::string id;
  Endpoint attach;
};

struct RouteSpec {
  std::vector<std::string> hops;
};

struct ActorSpec {
  std::string type;  // filter_kinds | resolve_symbols | time_window
  std::vector<EventKind> keep;
  std::vector<EventKind> drop;
  std::filesystem::path symbols;
  SimTimestamp lo;
  SimTimestamp hi = SimTimestamp::max();
};

enum class ExportFormat : std::uint8_t { Jaeger, Jsonl };

std::string_view to_string(ExportFormat format);

struct ExportSpec {
  ExportFormat format = ExportFormat::Jaeger;
  std::filesystem::path path;
};

enum class Execution : std::uint8_t { Auto, Concurrent, SingleThreaded };

struct RunOptions {
  std::size_t queue_capacity = kDefaultQueueCapacity;
  std::size_t channel_capacity = kDefaultChannelCapacity;
  std::uint64_t causality_window_ps = kDefaultCausalityWindowPs;
  std::size_t reorder_buffer = 0;
  Execution execution = Execution::Auto;
};

struct WiringConfig {
  std::vector<ComponentRef> components;
  std::vector<LogSource> sources;
  std::vector<ChannelSpec> channels;
  std::vector<ExternalSpec> externals;
  std::vector<RouteSpec> routes;
  std::map<std::string, std::vector<ActorSpec>> actors;
  std::vector<ExportSpec> exports;
  bool online = false;
  RunOptions options;

  std::optional<std::size_t> rank_of(std::string_view component) const;
  const ComponentRef* component(std::string_view id) const;
};

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`. Throws Error{Config} naming the offending field.
WiringConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
WiringConfig load_config(const std::filesystem::path& path);

/// Structural checks; parse_config already runs them. Throws Error{Config}.
void validate_config(const WiringConfig& config);

/// Serializes back to the document form (paths written as given).
std::string dump_config(const WiringConfig& config);

}  // namespace spanweave
