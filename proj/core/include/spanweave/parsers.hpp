#pragma once

// Dialect parsers: raw simulator log text -> validated, timestamp-monotonic
// event streams.
//
// Host dialect     `<tick>: <unit>: <OPCODE> key=value...`
// NIC dialect      `<ps> <nic-id>: <phrase> key=value...`
// Network dialect  `+<decimal-seconds>s <node>/<dev> <ENQ|DEQ|DROP> pkt=<dec> len=<dec>`

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spanweave/event_model.hpp"

namespace spanweave {

inline constexpr std::size_t kMaxLineLength = 64 * 1024;

enum class Dialect : std::uint8_t { Host, Nic, Net };

std::string_view to_string(Dialect dialect);
std::optional<Dialect> dialect_from_string(std::string_view text);
ComponentType component_type_of(Dialect dialect);

struct Skip {
  friend bool operator==(const Skip&, const Skip&) = default;
};

struct ParseError {
  std::size_t line_no = 0;
  std::string reason;

  friend bool operator==(const ParseError&, const ParseError&) = default;
};

using ParseOutcome = std::variant<Event, Skip, ParseError>;

// The parse functions are pure and total: any input text yields exactly one
// outcome. `seq` of a returned event is left at zero; streams assign it.
ParseOutcome parse_host_line(std::string_view line, const ComponentRef& component);
ParseOutcome parse_nic_line(std::string_view line, const ComponentRef& component);
ParseOutcome parse_net_line(std::string_view line, const ComponentRef& component);
ParseOutcome parse_line(Dialect dialect, std::string_view line, const ComponentRef& component);

/// Decimal seconds (no exponent) to integer picoseconds by exact digit
/// shifting. Digits beyond the 12th fractional place are truncated.
std::optional<std::uint64_t> decimal_seconds_to_ps(std::string_view text);

/// Reads LF-terminated lines from a regular file or a named pipe. Lines
/// longer than kMaxLineLength are consumed and reported as over-long.
class LineReader {
 public:
  /// `label` names the source in error messages (usually the component id).
  explicit LineReader(const std::filesystem::path& path, std::string label = {});
  ~LineReader();
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  struct Line {
    std::string_view text;
    bool too_long = false;
  };

  /// The view stays valid until the next call.
  std::optional<Line> next();

 private:
  bool fill();

  int fd_ = -1;
  std::string path_;
  std::string label_;
  std::vector<char> buffer_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  bool eof_ = false;
  bool discarding_ = false;
};

struct LogSource {
  std::filesystem::path path;
  Dialect dialect = Dialect::Host;
  ComponentRef component;
};

struct StreamOptions {
  /// 0 = out-of-order timestamps are fatal. N > 0 = hold up to N events in a
  /// reorder buffer; anything older than what was already emitted is still
  /// fatal.
  std::size_t reorder_buffer = 0;
};

struct StreamCounters {
  std::uint64_t lines = 0;
  std::uint64_t events = 0;
  std::uint64_t skipped = 0;
  std::uint64_t parse_errors = 0;
};

/// Pull-based event stream over one log source. Throws Error{Io} when the
/// source cannot be opened or read and Error{OutOfOrderTimestamp} when time
/// goes backwards.
class EventStream {
 public:
  EventStream(LogSource source, StreamOptions options = {});

  std::optional<Event> next();

  const StreamCounters& counters() const noexcept { return counters_; }
  const std::vector<ParseError>& errors() const noexcept { return errors_; }
  const LogSource& source() const noexcept { return source_; }

 private:
  std::optional<Event> read_parsed();
  Event emit(Event event);

  struct Later {
    bool operator()(const std::pair<Event, std::uint64_t>& a,
                    const std::pair<Event, std::uint64_t>& b) const {
      if (a.first.ts != b.first.ts) return a.first.ts > b.first.ts;
      return a.second > b.second;
    }
  };

  LogSource source_;
  StreamOptions options_;
  LineReader reader_;
  StreamCounters counters_;
  std::vector<ParseError> errors_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t arrival_ = 0;
  std::optional<SimTimestamp> last_ts_;
  std::priority_queue<std::pair<Event, std::uint64_t>, std::vector<std::pair<Event, std::uint64_t>>,
                      Later>
      reorder_;
  bool input_done_ = false;
};

inline constexpr std::size_t kMaxKeptParseErrors = 1024;

EventStream open_stream(LogSource source, StreamOptions options = {});

}  // namespace spanweave
