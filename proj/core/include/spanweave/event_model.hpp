#pragma once

// Universal event/span data model shared by every stage of the toolkit.

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spanweave {

/// Simulated time in picoseconds since simulation start. All component
/// simulators share this clock.
struct SimTimestamp {
  std::uint64_t ticks = 0;

  static constexpr SimTimestamp max() { return {std::numeric_limits<std::uint64_t>::max()}; }

  friend constexpr auto operator<=>(SimTimestamp, SimTimestamp) = default;
};

inline constexpr std::uint64_t kPicosPerNano = 1'000;
inline constexpr std::uint64_t kPicosPerMicro = 1'000'000;

enum class ComponentType : std::uint8_t { Host, Nic, Network };

std::string_view to_string(ComponentType type);
std::optional<ComponentType> component_type_from_string(std::string_view text);

struct ComponentRef {
  std::string id;
  ComponentType type = ComponentType::Host;

  friend bool operator==(const ComponentRef&, const ComponentRef&) = default;
};

// Closed event taxonomy, partitioned by component type (16 / 9 / 3).
enum class EventKind : std::uint8_t {
  // Host
  HostCall,
  HostReturn,
  HostSyscallEnter,
  HostSyscallExit,
  HostMmioRead,
  HostMmioWrite,
  HostMmioCompleteRead,
  HostMmioCompleteWrite,
  HostDmaRead,
  HostDmaWrite,
  HostDmaComplete,
  HostMsiX,
  HostIntPost,
  HostIntClear,
  HostCtxSwitch,
  HostPciConfig,
  // Nic
  NicMmioRead,
  NicMmioWrite,
  NicMmioComplete,
  NicDmaIssueRead,
  NicDmaIssueWrite,
  NicDmaComplete,
  NicTx,
  NicRx,
  NicMsiXIssue,
  // Network
  NetEnqueue,
  NetDequeue,
  NetDrop,
};

inline constexpr std::size_t kEventKindCount = 28;

// Closed span taxonomy (6 / 4 / 1).
enum class SpanKind : std::uint8_t {
  HostSyscall,
  HostMmio,
  HostDma,
  HostInterrupt,
  HostPciConfig,
  HostCpuActivity,
  NicMmioSpan,
  NicDmaSpan,
  NicTxSpan,
  NicRxSpan,
  NetHop,
};

inline constexpr std::size_t kSpanKindCount = 11;

std::span<const EventKind> kind_registry(ComponentType type);
std::span<const SpanKind> span_kind_registry(ComponentType type);

ComponentType component_type_of(EventKind kind);
ComponentType component_type_of(SpanKind kind);

std::string_view to_string(EventKind kind);
std::string_view to_string(SpanKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view text);
std::optional<SpanKind> span_kind_from_string(std::string_view text);

/// A register or memory address; rendered as canonical lowercase `0x...`.
struct Hex {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(Hex, Hex) = default;
};

using AttrValue = std::variant<std::uint64_t, Hex, std::string, bool>;
using Attrs = std::map<std::string, AttrValue, std::less<>>;

enum class AttrType : std::uint8_t { Uint, Hex, Ident, Bool };

std::string_view to_string(AttrType type);
AttrType type_of(const AttrValue& value);
std::string format_hex(std::uint64_t value);
std::string format_attr(const AttrValue& value);

// Identifier text: [A-Za-z_][A-Za-z0-9_.-]*
bool is_ident(std::string_view text);

struct Event {
  std::uint64_t seq = 0;
  SimTimestamp ts;
  ComponentRef component;
  EventKind kind = EventKind::HostCall;
  Attrs attrs;

  friend bool operator==(const Event&, const Event&) = default;
};

std::optional<std::uint64_t> get_uint(const Attrs& attrs, std::string_view name);
std::optional<std::uint64_t> get_hex(const Attrs& attrs, std::string_view name);
std::optional<std::string_view> get_ident(const Attrs& attrs, std::string_view name);

struct AttrSpec {
  std::string_view name;
  AttrType type;
};

/// Attributes every event of `kind` must carry (the dialect grammars may add
/// optional ones, e.g. the host `unit`).
std::span<const AttrSpec> required_attrs(EventKind kind);

struct ValidationError {
  enum class Code : std::uint8_t { MissingAttr, KindComponentMismatch, BadValueType };
  Code code;
  std::string attr;

  friend bool operator==(const ValidationError&, const ValidationError&) = default;
};

std::string describe(const ValidationError& error);

/// Empty result means the event is valid.
std::optional<ValidationError> validate_event(const Event& event);

struct TraceId {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  std::string to_hex() const;
  static std::optional<TraceId> from_hex(std::string_view text);

  friend constexpr auto operator<=>(const TraceId&, const TraceId&) = default;
};

using SpanId = std::uint64_t;

std::string span_id_hex(SpanId id);
std::optional<SpanId> span_id_from_hex(std::string_view text);

struct Span {
  SpanId span_id = 0;
  TraceId trace_id;
  std::optional<SpanId> parent_span_id;
  SpanKind kind = SpanKind::HostSyscall;
  ComponentRef component;
  SimTimestamp start_ts;
  SimTimestamp end_ts;
  std::vector<Event> events;
  Attrs attrs;

  friend bool operator==(const Span&, const Span&) = default;
};

enum class Boundary : std::uint8_t { Pcie, Eth };

std::string_view to_string(Boundary boundary);
std::optional<Boundary> boundary_from_string(std::string_view text);

enum class PcieOp : std::uint8_t { Mmio, DmaRead, DmaWrite, Interrupt };

struct PcieKey {
  PcieOp op = PcieOp::Mmio;
  std::uint64_t addr = 0;
  std::uint64_t size = 0;
  std::uint64_t id = 0;
  std::uint64_t vec = 0;
};

/// Ethernet matching key. `pkt` is only known on switch-to-switch hops.
struct EthKey {
  std::uint64_t len = 0;
  std::optional<std::uint64_t> pkt;
};

struct TraceContext {
  TraceId trace_id;
  SpanId parent_span_id = 0;
  std::string origin;
  Boundary boundary = Boundary::Pcie;
  std::variant<PcieKey, EthKey> key;
  SimTimestamp ts;
};

}  // namespace spanweave
