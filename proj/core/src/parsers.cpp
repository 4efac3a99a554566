#include "spanweave/parsers.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "spanweave/errors.hpp"

namespace spanweave {
namespace {

struct Tokenizer {
  std::string_view rest;

  std::optional<std::string_view> next() {
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (rest.empty()) return std::nullopt;
    auto end = rest.find(' ');
    auto token = rest.substr(0, end);
    rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    return token;
  }
};

std::optional<std::uint64_t> parse_dec(std::string_view text) {
  if (text.empty() || text.size() > 20) return std::nullopt;
  std::uint64_t value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    const auto digit = static_cast<std::uint64_t>(c - '0');
    if (value > (UINT64_MAX - digit) / 10) return std::nullopt;
    value = value * 10 + digit;
  }
  return value;
}

std::optional<std::uint64_t> parse_hex(std::string_view text) {
  if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X')) return std::nullopt;
  text.remove_prefix(2);
  if (text.size() > 16) return std::nullopt;
  std::uint64_t value = 0;
  for (char c : text) {
    int digit;
    if (c >= '0' && c <= '9') {
      digit = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      digit = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      digit = c - 'A' + 10;
    } else {
      return std::nullopt;
    }
    value = (value << 4) | static_cast<std::uint64_t>(digit);
  }
  return value;
}

const char* reason_for(AttrType type) {
  switch (type) {
    case AttrType::Uint:
      return "bad decimal";
    case AttrType::Hex:
      return "bad hex";
    case AttrType::Ident:
      return "bad ident";
    case AttrType::Bool:
      return "bad bool";
  }
  return "bad value";
}

std::optional<AttrValue> parse_typed(std::string_view text, AttrType type) {
  switch (type) {
    case AttrType::Uint:
      if (auto v = parse_dec(text)) return AttrValue{*v};
      return std::nullopt;
    case AttrType::Hex:
      if (auto v = parse_hex(text)) return AttrValue{Hex{*v}};
      return std::nullopt;
    case AttrType::Ident:
      if (is_ident(text)) return AttrValue{std::string(text)};
      return std::nullopt;
    case AttrType::Bool:
      if (text == "true") return AttrValue{true};
      if (text == "false") return AttrValue{false};
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<AttrValue> parse_untyped(std::string_view text) {
  if (text.starts_with("0x") || text.starts_with("0X")) {
    if (auto v = parse_hex(text)) return AttrValue{Hex{*v}};
    return std::nullopt;
  }
  if (auto v = parse_dec(text)) return AttrValue{*v};
  if (is_ident(text)) return AttrValue{std::string(text)};
  return std::nullopt;
}

ParseError error(std::string reason) { return ParseError{0, std::move(reason)}; }

// Parses the `key=value` tail into `event.attrs` and checks the required set
// for `event.kind`.
std::optional<ParseError> parse_attrs(Tokenizer& tokens, Event& event) {
  const auto required = required_attrs(event.kind);
  while (auto token = tokens.next()) {
    const auto eq = token->find('=');
    if (eq == std::string_view::npos || eq == 0) return error("malformed attr");
    const auto key = token->substr(0, eq);
    const auto text = token->substr(eq + 1);
    if (text.empty()) return error("missing value for " + std::string(key));
    if (event.attrs.contains(key)) return error("duplicate attr " + std::string(key));

    const AttrSpec* spec = nullptr;
    for (const auto& candidate : required) {
      if (candidate.name == key) spec = &candidate;
    }
    std::optional<AttrValue> value =
        spec != nullptr ? parse_typed(text, spec->type) : parse_untyped(text);
    if (!value) return error(spec != nullptr ? reason_for(spec->type) : "bad value");
    event.attrs.emplace(std::string(key), std::move(*value));
  }
  for (const auto& spec : required) {
    if (!event.attrs.contains(spec.name)) return error("missing attr " + std::string(spec.name));
  }
  return std::nullopt;
}

struct HostOpcode {
  std::string_view text;
  EventKind kind;
};

constexpr std::array<HostOpcode, 16> kHostOpcodes = {{
    {"CALL", EventKind::HostCall},
    {"RET", EventKind::HostReturn},
    {"SYSCALL", EventKind::HostSyscallEnter},
    {"SYSRET", EventKind::HostSyscallExit},
    {"MMIO_R", EventKind::HostMmioRead},
    {"MMIO_W", EventKind::HostMmioWrite},
    {"MMIO_CR", EventKind::HostMmioCompleteRead},
    {"MMIO_CW", EventKind::HostMmioCompleteWrite},
    {"DMA_R", EventKind::HostDmaRead},
    {"DMA_W", EventKind::HostDmaWrite},
    {"DMA_C", EventKind::HostDmaComplete},
    {"MSIX", EventKind::HostMsiX},
    {"INT_POST", EventKind::HostIntPost},
    {"INT_CLEAR", EventKind::HostIntClear},
    {"CTX_SWITCH", EventKind::HostCtxSwitch},
    {"PCI_CFG", EventKind::HostPciConfig},
}};

struct NicPhrase {
  std::array<std::string_view, 3> words;
  EventKind kind;
};

constexpr std::array<NicPhrase, 9> kNicPhrases = {{
    {{"mmio", "read", ""}, EventKind::NicMmioRead},
    {{"mmio", "write", ""}, EventKind::NicMmioWrite},
    {{"mmio", "complete", ""}, EventKind::NicMmioComplete},
    {{"dma", "issue", "read"}, EventKind::NicDmaIssueRead},
    {{"dma", "issue", "write"}, EventKind::NicDmaIssueWrite},
    {{"dma", "complete", ""}, EventKind::NicDmaComplete},
    {{"tx", "pkt", ""}, EventKind::NicTx},
    {{"rx", "pkt", ""}, EventKind::NicRx},
    {{"msix", "issue", ""}, EventKind::NicMsiXIssue},
}};

// Splits a leading run of decimal digits. Returns nullopt when the line does
// not start with a digit.
std::optional<std::string_view> leading_digits(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && line[n] >= '0' && line[n] <= '9') ++n;
  if (n == 0) return std::nullopt;
  return line.substr(0, n);
}

ParseOutcome finish(Event event, std::optional<ParseError> err) {
  if (err) return *err;
  if (auto invalid = validate_event(event)) return error(describe(*invalid));
  return event;
}

}  // namespace

std::string_view to_string(Dialect dialect) {
  switch (dialect) {
    case Dialect::Host:
      return "host";
    case Dialect::Nic:
      return "nic";
    case Dialect::Net:
      return "net";
  }
  return "unknown";
}

std::optional<Dialect> dialect_from_string(std::string_view text) {
  if (text == "host") return Dialect::Host;
  if (text == "nic") return Dialect::Nic;
  if (text == "net") return Dialect::Net;
  return std::nullopt;
}

ComponentType component_type_of(Dialect dialect) {
  switch (dialect) {
    case Dialect::Host:
      return ComponentType::Host;
    case Dialect::Nic:
      return ComponentType::Nic;
    case Dialect::Net:
      return ComponentType::Network;
  }
  return ComponentType::Host;
}

std::optional<std::uint64_t> decimal_seconds_to_ps(std::string_view text) {
  constexpr std::uint64_t kPicosPerSecond = 1'000'000'000'000ULL;
  const auto dot = text.find('.');
  const auto whole = text.substr(0, dot);
  if (whole.empty()) return std::nullopt;
  auto seconds = parse_dec(whole);
  if (!seconds || *seconds > UINT64_MAX / kPicosPerSecond) return std::nullopt;
  std::uint64_t ps = *seconds * kPicosPerSecond;
  if (dot == std::string_view::npos) return ps;

  const auto frac = text.substr(dot + 1);
  if (frac.empty()) return std::nullopt;
  std::uint64_t frac_ps = 0;
  std::uint64_t scale = kPicosPerSecond;
  for (char c : frac) {
    if (c < '0' || c > '9') return std::nullopt;
    scale /= 10;
    frac_ps += static_cast<std::uint64_t>(c - '0') * scale;
  }
  if (ps > UINT64_MAX - frac_ps) return std::nullopt;
  return ps + frac_ps;
}

ParseOutcome parse_host_line(std::string_view line, const ComponentRef& component) {
  if (line.size() > kMaxLineLength) return error("line too long");
  auto tick_text = leading_digits(line);
  if (!tick_text || line.size() <= tick_text->size() || line[tick_text->size()] != ':') {
    return Skip{};
  }
  Tokenizer tokens{line.substr(tick_text->size() + 1)};
  auto unit = tokens.next();
  if (!unit || unit->size() < 2 || unit->back() != ':') return Skip{};
  auto opcode = tokens.next();
  if (!opcode) return Skip{};
  const HostOpcode* match = nullptr;
  for (const auto& op : kHostOpcodes) {
    if (op.text == *opcode) match = &op;
  }
  if (match == nullptr) return Skip{};

  auto tick = parse_dec(*tick_text);
  if (!tick) return error("bad timestamp");
  const auto unit_name = unit->substr(0, unit->size() - 1);
  if (!is_ident(unit_name)) return error("bad unit");

  Event event;
  event.ts = SimTimestamp{*tick};
  event.component = component;
  event.kind = match->kind;
  auto err = parse_attrs(tokens, event);
  if (!err && event.attrs.contains("unit")) err = error("duplicate attr unit");
  event.attrs.emplace("unit", std::string(unit_name));
  return finish(std::move(event), std::move(err));
}

ParseOutcome parse_nic_line(std::string_view line, const ComponentRef& component) {
  if (line.size() > kMaxLineLength) return error("line too long");
  auto ts_text = leading_digits(line);
  if (!ts_text || line.size() <= ts_text->size() || line[ts_text->size()] != ' ') return Skip{};
  Tokenizer tokens{line.substr(ts_text->size())};
  auto nic = tokens.next();
  if (!nic || nic->size() < 2 || nic->back() != ':') return Skip{};

  const NicPhrase* match = nullptr;
  Tokenizer after_phrase = tokens;
  for (const auto& phrase : kNicPhrases) {
    Tokenizer probe = tokens;
    bool ok = true;
    for (auto word : phrase.words) {
      if (word.empty()) break;
      auto token = probe.next();
      if (!token || *token != word) {
        ok = false;
        break;
      }
    }
    if (ok) {
      match = &phrase;
      after_phrase = probe;
      break;
    }
  }
  if (match == nullptr) return Skip{};

  auto ts = parse_dec(*ts_text);
  if (!ts) return error("bad timestamp");
  Event event;
  event.ts = SimTimestamp{*ts};
  event.component = component;
  event.kind = match->kind;
  auto err = parse_attrs(after_phrase, event);
  return finish(std::move(event), std::move(err));
}

ParseOutcome parse_net_line(std::string_view line, const ComponentRef& component) {
  if (line.size() > kMaxLineLength) return error("line too long");
  if (line.empty() || line.front() != '+') return Skip{};
  Tokenizer tokens{line.substr(1)};
  auto time_token = tokens.next();
  if (!time_token || time_token->size() < 2 || time_token->back() != 's') {
    return error("bad timestamp");
  }
  auto ps = decimal_seconds_to_ps(time_token->substr(0, time_token->size() - 1));
  if (!ps) return error("bad timestamp");

  auto where = tokens.next();
  if (!where) return error("missing device");
  const auto slash = where->find('/');
  if (slash == std::string_view::npos) return error("bad device");
  const auto node = where->substr(0, slash);
  const auto dev = where->substr(slash + 1);
  if (!is_ident(node) || !is_ident(dev)) return error("bad device");

  auto op = tokens.next();
  if (!op) return error("missing operation");
  EventKind kind;
  if (*op == "ENQ") {
    kind = EventKind::NetEnqueue;
  } else if (*op == "DEQ") {
    kind = EventKind::NetDequeue;
  } else if (*op == "DROP") {
    kind = EventKind::NetDrop;
  } else {
    return Skip{};
  }

  Event event;
  event.ts = SimTimestamp{*ps};
  event.component = component;
  event.kind = kind;
  event.attrs.emplace("node", std::string(node));
  event.attrs.emplace("dev", std::string(dev));
  std::optional<ParseError> err;
  // node/dev come from the location token; they may not be repeated as attrs.
  Event tail;
  tail.kind = kind;
  while (auto token = tokens.next()) {
    const auto eq = token->find('=');
    if (eq == std::string_view::npos || eq == 0) {
      err = error("malformed attr");
      break;
    }
    const auto key = token->substr(0, eq);
    const auto text = token->substr(eq + 1);
    if (text.empty()) {
      err = error("missing value for " + std::string(key));
      break;
    }
    if (event.attrs.contains(key)) {
      err = error("duplicate attr " + std::string(key));
      break;
    }
    auto value = (key == "pkt" || key == "len") ? parse_typed(text, AttrType::Uint)
                                                : parse_untyped(text);
    if (!value) {
      err = error((key == "pkt" || key == "len") ? "bad decimal" : "bad value");
      break;
    }
    event.attrs.emplace(std::string(key), std::move(*value));
  }
  if (!err) {
    for (auto name : {"pkt", "len"}) {
      if (!event.attrs.contains(name)) {
        err = error("missing attr " + std::string(name));
        break;
      }
    }
  }
  return finish(std::move(event), std::move(err));
}

ParseOutcome parse_line(Dialect dialect, std::string_view line, const ComponentRef& component) {
  switch (dialect) {
    case Dialect::Host:
      return parse_host_line(line, component);
    case Dialect::Nic:
      return parse_nic_line(line, component);
    case Dialect::Net:
      return parse_net_line(line, component);
  }
  return Skip{};
}

// ---------------------------------------------------------------------------
// LineReader

LineReader::LineReader(const std::filesystem::path& path, std::string label)
    : path_(path.string()), label_(std::move(label)), buffer_(2 * kMaxLineLength + 2) {
  do {
    fd_ = ::open(path_.c_str(), O_RDONLY | O_CLOEXEC);
  } while (fd_ < 0 && errno == EINTR);
  if (fd_ < 0) {
    throw Error(ErrorCode::Io, "cannot open '" + path_ + "': " + std::strerror(errno),
                label_.empty() ? path_ : label_);
  }
}

LineReader::~LineReader() {
  if (fd_ >= 0) ::close(fd_);
}

bool LineReader::fill() {
  if (begin_ > 0) {
    std::memmove(buffer_.data(), buffer_.data() + begin_, end_ - begin_);
    end_ -= begin_;
    begin_ = 0;
  }
  if (end_ == buffer_.size()) return true;
  for (;;) {
    const ssize_t n = ::read(fd_, buffer_.data() + end_, buffer_.size() - end_);
    if (n > 0) {
      end_ += static_cast<std::size_t>(n);
      return true;
    }
    if (n == 0) {
      eof_ = true;
      return false;
    }
    if (errno == EINTR) continue;
    throw Error(ErrorCode::Io, "read failed on '" + path_ + "': " + std::strerror(errno),
                label_.empty() ? path_ : label_);
  }
}

std::optional<LineReader::Line> LineReader::next() {
  for (;;) {
    char* start = buffer_.data() + begin_;
    const std::size_t avail = end_ - begin_;
    if (auto* nl = static_cast<char*>(std::memchr(start, '\n', avail))) {
      const auto len = static_cast<std::size_t>(nl - start);
      begin_ += len + 1;
      if (discarding_) {
        discarding_ = false;
        return Line{{}, true};
      }
      if (len > kMaxLineLength) return Line{{}, true};
      return Line{std::string_view(start, len), false};
    }
    if (avail > kMaxLineLength) {
      discarding_ = true;
      begin_ = end_ = 0;
    }
    if (eof_) {
      if (discarding_) {
        discarding_ = false;
        return Line{{}, true};
      }
      if (avail == 0) return std::nullopt;
      begin_ = end_;
      return Line{std::string_view(start, avail), false};
    }
    fill();
  }
}

// ---------------------------------------------------------------------------
// EventStream

EventStream::EventStream(LogSource source, StreamOptions options)
    : source_(std::move(source)),
      options_(options),
      reader_(source_.path, source_.component.id) {
  if (component_type_of(source_.dialect) != source_.component.type) {
    throw Error(ErrorCode::Config,
                "dialect '" + std::string(to_string(source_.dialect)) +
                    "' does not match component type '" +
                    std::string(to_string(source_.component.type)) + "'",
                source_.component.id);
  }
}

std::optional<Event> EventStream::read_parsed() {
  while (auto line = reader_.next()) {
    ++counters_.lines;
    ParseOutcome outcome = line->too_long
                               ? ParseOutcome{ParseError{0, "line too long"}}
                               : parse_line(source_.dialect, line->text, source_.component);
    if (auto* event = std::get_if<Event>(&outcome)) {
      return std::move(*event);
    }
    if (auto* err = std::get_if<ParseError>(&outcome)) {
      ++counters_.parse_errors;
      if (errors_.size() < kMaxKeptParseErrors) {
        err->line_no = counters_.lines;
        errors_.push_back(std::move(*err));
      }
    } else {
      ++counters_.skipped;
    }
  }
  return std::nullopt;
}

Event EventStream::emit(Event event) {
  if (last_ts_ && event.ts < *last_ts_) {
    throw Error(ErrorCode::OutOfOrderTimestamp,
                "timestamp " + std::to_string(event.ts.ticks) + " at seq " +
                    std::to_string(next_seq_) + " is earlier than " +
                    std::to_string(last_ts_->ticks),
                source_.component.id);
  }
  last_ts_ = event.ts;
  event.seq = next_seq_++;
  ++counters_.events;
  return event;
}

std::optional<Event> EventStream::next() {
  if (options_.reorder_buffer == 0) {
    auto event = read_parsed();
    if (!event) return std::nullopt;
    return emit(std::move(*event));
  }
  while (!input_done_ && reorder_.size() < options_.reorder_buffer) {
    auto event = read_parsed();
    if (!event) {
      input_done_ = true;
      break;
    }
    reorder_.emplace(std::move(*event), arrival_++);
  }
  if (reorder_.empty()) return std::nullopt;
  Event top = reorder_.top().first;
  reorder_.pop();
  return emit(std::move(top));
}

EventStream open_stream(LogSource source, StreamOptions options) {
  return EventStream(std::move(source), options);
}

}  // namespace spanweave
