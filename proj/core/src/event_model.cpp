#include "spanweave/event_model.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace spanweave {
namespace {

constexpr std::array<EventKind, 16> kHostKinds = {
    EventKind::HostCall,          EventKind::HostReturn,           EventKind::HostSyscallEnter,
    EventKind::HostSyscallExit,   EventKind::HostMmioRead,         EventKind::HostMmioWrite,
    EventKind::HostMmioCompleteRead, EventKind::HostMmioCompleteWrite, EventKind::HostDmaRead,
    EventKind::HostDmaWrite,      EventKind::HostDmaComplete,      EventKind::HostMsiX,
    EventKind::HostIntPost,       EventKind::HostIntClear,         EventKind::HostCtxSwitch,
    EventKind::HostPciConfig,
};

constexpr std::array<EventKind, 9> kNicKinds = {
    EventKind::NicMmioRead,     EventKind::NicMmioWrite,     EventKind::NicMmioComplete,
    EventKind::NicDmaIssueRead, EventKind::NicDmaIssueWrite, EventKind::NicDmaComplete,
    EventKind::NicTx,           EventKind::NicRx,            EventKind::NicMsiXIssue,
};

constexpr std::array<EventKind, 3> kNetKinds = {
    EventKind::NetEnqueue,
    EventKind::NetDequeue,
    EventKind::NetDrop,
};

constexpr std::array<SpanKind, 6> kHostSpanKinds = {
    SpanKind::HostSyscall,   SpanKind::HostMmio,      SpanKind::HostDma,
    SpanKind::HostInterrupt, SpanKind::HostPciConfig, SpanKind::HostCpuActivity,
};

constexpr std::array<SpanKind, 4> kNicSpanKinds = {
    SpanKind::NicMmioSpan,
    SpanKind::NicDmaSpan,
    SpanKind::NicTxSpan,
    SpanKind::NicRxSpan,
};

constexpr std::array<SpanKind, 1> kNetSpanKinds = {SpanKind::NetHop};

constexpr std::array<std::string_view, kEventKindCount> kEventKindNames = {
    "HostCall",        "HostReturn",       "HostSyscallEnter",     "HostSyscallExit",
    "HostMmioRead",    "HostMmioWrite",    "HostMmioCompleteRead", "HostMmioCompleteWrite",
    "HostDmaRead",     "HostDmaWrite",     "HostDmaComplete",      "HostMsiX",
    "HostIntPost",     "HostIntClear",     "HostCtxSwitch",        "HostPciConfig",
    "NicMmioRead",     "NicMmioWrite",     "NicMmioComplete",      "NicDmaIssueRead",
    "NicDmaIssueWrite", "NicDmaComplete",  "NicTx",                "NicRx",
    "NicMsiXIssue",    "NetEnqueue",       "NetDequeue",           "NetDrop",
};

constexpr std::array<std::string_view, kSpanKindCount> kSpanKindNames = {
    "HostSyscall", "HostMmio",    "HostDma",    "HostInterrupt", "HostPciConfig", "HostCpuActivity",
    "NicMmioSpan", "NicDmaSpan",  "NicTxSpan",  "NicRxSpan",     "NetHop",
};

using A = AttrSpec;
constexpr AttrType U = AttrType::Uint;
constexpr AttrType X = AttrType::Hex;
constexpr AttrType I = AttrType::Ident;

constexpr std::array<A, 2> kCall = {A{"pc", X}, A{"target", X}};
constexpr std::array<A, 1> kRet = {A{"pc", X}};
constexpr std::array<A, 2> kSysEnter = {A{"num", U}, A{"name", I}};
constexpr std::array<A, 2> kSysExit = {A{"num", U}, A{"ret", U}};
constexpr std::array<A, 3> kAddrSizeId = {A{"addr", X}, A{"size", U}, A{"id", U}};
constexpr std::array<A, 4> kMmioWrite = {A{"addr", X}, A{"size", U}, A{"val", X}, A{"id", U}};
constexpr std::array<A, 1> kId = {A{"id", U}};
constexpr std::array<A, 1> kVec = {A{"vec", U}};
constexpr std::array<A, 1> kPid = {A{"pid", U}};
constexpr std::array<A, 1> kReg = {A{"reg", X}};
constexpr std::array<A, 2> kTx = {A{"len", U}, A{"hash", X}};
constexpr std::array<A, 1> kRx = {A{"len", U}};
constexpr std::array<A, 4> kNet = {A{"pkt", U}, A{"len", U}, A{"node", I}, A{"dev", I}};

template <typename E>
constexpr std::size_t index_of(E value) {
  return static_cast<std::size_t>(value);
}

}  // namespace

std::string_view to_string(ComponentType type) {
  switch (type) {
    case ComponentType::Host:
      return "host";
    case ComponentType::Nic:
      return "nic";
    case ComponentType::Network:
      return "network";
  }
  return "unknown";
}

std::optional<ComponentType> component_type_from_string(std::string_view text) {
  if (text == "host") return ComponentType::Host;
  if (text == "nic") return ComponentType::Nic;
  if (text == "network") return ComponentType::Network;
  return std::nullopt;
}

std::span<const EventKind> kind_registry(ComponentType type) {
  switch (type) {
    case ComponentType::Host:
      return kHostKinds;
    case ComponentType::Nic:
      return kNicKinds;
    case ComponentType::Network:
      return kNetKinds;
  }
  return {};
}

std::span<const SpanKind> span_kind_registry(ComponentType type) {
  switch (type) {
    case ComponentType::Host:
      return kHostSpanKinds;
    case ComponentType::Nic:
      return kNicSpanKinds;
    case ComponentType::Network:
      return kNetSpanKinds;
  }
  return {};
}

ComponentType component_type_of(EventKind kind) {
  if (kind <= EventKind::HostPciConfig) return ComponentType::Host;
  if (kind <= EventKind::NicMsiXIssue) return ComponentType::Nic;
  return ComponentType::Network;
}

ComponentType component_type_of(SpanKind kind) {
  if (kind <= SpanKind::HostCpuActivity) return ComponentType::Host;
  if (kind <= SpanKind::NicRxSpan) return ComponentType::Nic;
  return ComponentType::Network;
}

std::string_view to_string(EventKind kind) { return kEventKindNames.at(index_of(kind)); }
std::string_view to_string(SpanKind kind) { return kSpanKindNames.at(index_of(kind)); }

std::optional<EventKind> event_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kEventKindNames.size(); ++i) {
    if (kEventKindNames[i] == text) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

std::optional<SpanKind> span_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kSpanKindNames.size(); ++i) {
    if (kSpanKindNames[i] == text) return static_cast<SpanKind>(i);
  }
  return std::nullopt;
}

std::string_view to_string(AttrType type) {
  switch (type) {
    case AttrType::Uint:
      return "uint";
    case AttrType::Hex:
      return "hex";
    case AttrType::Ident:
      return "ident";
    case AttrType::Bool:
      return "bool";
  }
  return "unknown";
}

AttrType type_of(const AttrValue& value) { return static_cast<AttrType>(value.index()); }

std::string format_hex(std::uint64_t value) {
  char buf[19] = {'0', 'x'};
  auto [end, ec] = std::to_chars(buf + 2, buf + sizeof(buf), value, 16);
  (void)ec;
  return std::string(buf, end);
}

std::string format_attr(const AttrValue& value) {
  struct Visitor {
    std::string operator()(std::uint64_t v) const { return std::to_string(v); }
    std::string operator()(Hex v) const { return format_hex(v.value); }
    std::string operator()(const std::string& v) const { return v; }
    std::string operator()(bool v) const { return v ? "true" : "false"; }
  };
  return std::visit(Visitor{}, value);
}

bool is_ident(std::string_view text) {
  if (text.empty()) return false;
  auto head = static_cast<unsigned char>(text.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (!(std::isalnum(u) || c == '_' || c == '.' || c == '-')) return false;
  }
  return true;
}

std::optional<std::uint64_t> get_uint(const Attrs& attrs, std::string_view name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return std::nullopt;
  if (const auto* v = std::get_if<std::uint64_t>(&it->second)) return *v;
  return std::nullopt;
}

std::optional<std::uint64_t> get_hex(const Attrs& attrs, std::string_view name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return std::nullopt;
  if (const auto* v = std::get_if<Hex>(&it->second)) return v->value;
  return std::nullopt;
}

std::optional<std::string_view> get_ident(const Attrs& attrs, std::string_view name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return std::nullopt;
  if (const auto* v = std::get_if<std::string>(&it->second)) return std::string_view(*v);
  return std::nullopt;
}

std::span<const AttrSpec> required_attrs(EventKind kind) {
  switch (kind) {
    case EventKind::HostCall:
      return kCall;
    case EventKind::HostReturn:
      return kRet;
    case EventKind::HostSyscallEnter:
      return kSysEnter;
    case EventKind::HostSyscallExit:
      return kSysExit;
    case EventKind::HostMmioRead:
    case EventKind::HostDmaRead:
    case EventKind::HostDmaWrite:
    case EventKind::NicMmioRead:
    case EventKind::NicMmioWrite:
    case EventKind::NicDmaIssueRead:
    case EventKind::NicDmaIssueWrite:
      return kAddrSizeId;
    case EventKind::HostMmioWrite:
      return kMmioWrite;
    case EventKind::HostMmioCompleteRead:
    case EventKind::HostMmioCompleteWrite:
    case EventKind::HostDmaComplete:
    case EventKind::NicMmioComplete:
    case EventKind::NicDmaComplete:
      return kId;
    case EventKind::HostMsiX:
    case EventKind::HostIntPost:
    case EventKind::HostIntClear:
    case EventKind::NicMsiXIssue:
      return kVec;
    case EventKind::HostCtxSwitch:
      return kPid;
    case EventKind::HostPciConfig:
      return kReg;
    case EventKind::NicTx:
      return kTx;
    case EventKind::NicRx:
      return kRx;
    case EventKind::NetEnqueue:
    case EventKind::NetDequeue:
    case EventKind::NetDrop:
      return kNet;
  }
  return {};
}

std::string describe(const ValidationError& error) {
  switch (error.code) {
    case ValidationError::Code::MissingAttr:
      return "MissingAttr(" + error.attr + ")";
    case ValidationError::Code::KindComponentMismatch:
      return "KindComponentMismatch";
    case ValidationError::Code::BadValueType:
      return "BadValueType(" + error.attr + ")";
  }
  return "unknown";
}

std::optional<ValidationError> validate_event(const Event& event) {
  if (component_type_of(event.kind) != event.component.type) {
    return ValidationError{ValidationError::Code::KindComponentMismatch, {}};
  }
  for (const auto& spec : required_attrs(event.kind)) {
    auto it = event.attrs.find(spec.name);
    if (it == event.attrs.end()) {
      return ValidationError{ValidationError::Code::MissingAttr, std::string(spec.name)};
    }
    if (type_of(it->second) != spec.type) {
      return ValidationError{ValidationError::Code::BadValueType, std::string(spec.name)};
    }
    if (spec.type == AttrType::Ident && !is_ident(std::get<std::string>(it->second))) {
      return ValidationError{ValidationError::Code::BadValueType, std::string(spec.name)};
    }
  }
  return std::nullopt;
}

std::string TraceId::to_hex() const {
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return std::string(buf, 32);
}

namespace {

std::optional<std::uint64_t> parse_fixed_hex(std::string_view text) {
  if (text.empty() || text.size() > 16) return std::nullopt;
  std::uint64_t value = 0;
  for (char c : text) {
    int digit;
    if (c >= '0' && c <= '9') {
      digit = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      digit = c - 'a' + 10;
    } else {
      return std::nullopt;
    }
    value = (value << 4) | static_cast<std::uint64_t>(digit);
  }
  return value;
}

}  // namespace

std::optional<TraceId> TraceId::from_hex(std::string_view text) {
  if (text.size() != 32) return std::nullopt;
  auto hi = parse_fixed_hex(text.substr(0, 16));
  auto lo = parse_fixed_hex(text.substr(16));
  if (!hi || !lo) return std::nullopt;
  return TraceId{*hi, *lo};
}

std::string span_id_hex(SpanId id) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(id));
  return std::string(buf, 16);
}

std::optional<SpanId> span_id_from_hex(std::string_view text) {
  if (text.size() != 16) return std::nullopt;
  return parse_fixed_hex(text);
}

std::string_view to_string(Boundary boundary) {
  return boundary == Boundary::Pcie ? "pcie" : "eth";
}

std::optional<Boundary> boundary_from_string(std::string_view text) {
  if (text == "pcie") return Boundary::Pcie;
  if (text == "eth") return Boundary::Eth;
  return std::nullopt;
}

}  // namespace spanweave
