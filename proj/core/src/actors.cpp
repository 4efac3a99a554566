#include "spanweave/actors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "spanweave/errors.hpp"

namespace spanweave {

std::optional<Event> FilterKinds::process(Event event) {
  const bool listed = kinds_.contains(event.kind);
  if (listed == (mode_ == Mode::Keep)) return event;
  return std::nullopt;
}

SymbolMap::SymbolMap(std::vector<std::pair<std::uint64_t, std::string>> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].first <= entries_[i - 1].first) {
      throw Error(ErrorCode::Config, "symbol map addresses must be strictly increasing (at " +
                                         format_hex(entries_[i].first) + ")");
    }
  }
}

SymbolMap SymbolMap::parse(std::string_view text) {
  std::vector<std::pair<std::uint64_t, std::string>> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty()) continue;

    const auto space = line.find_first_of(" \t");
    const auto addr_text = line.substr(0, space);
    auto name = space == std::string_view::npos ? std::string_view{} : line.substr(space + 1);
    while (!name.empty() && (name.front() == ' ' || name.front() == '\t')) name.remove_prefix(1);

    std::uint64_t addr = 0;
    bool ok = addr_text.size() > 2 && addr_text.size() <= 18 && addr_text.starts_with("0x");
    for (std::size_t i = 2; ok && i < addr_text.size(); ++i) {
      const char c = addr_text[i];
      int digit = -1;
      if (c >= '0' && c <= '9') digit = c - '0';
      if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
      if (c >= 'A' && c <= 'F') digit = c - 'A' + 10;
      ok = digit >= 0;
      addr = (addr << 4) | static_cast<std::uint64_t>(digit < 0 ? 0 : digit);
    }
    if (!ok || !is_ident(name)) {
      throw Error(ErrorCode::Config, "symbol map line " + std::to_string(line_no) + " is malformed");
    }
    entries.emplace_back(addr, std::string(name));
  }
  return SymbolMap(std::move(entries));
}

SymbolMap SymbolMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open symbol map '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::optional<std::string_view> SymbolMap::resolve(std::uint64_t addr) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), addr,
                             [](std::uint64_t a, const auto& entry) { return a < entry.first; });
  if (it == entries_.begin()) return std::nullopt;
  return std::string_view(std::prev(it)->second);
}

std::optional<Event> ResolveSymbols::process(Event event) {
  if (event.kind != EventKind::HostCall) return event;
  const auto target = get_hex(event.attrs, "target");
  if (!target) return event;
  if (auto fn = map_.resolve(*target)) {
    event.attrs.insert_or_assign("fn", std::string(*fn));
  } else {
    event.attrs.insert_or_assign("fn_unresolved", true);
  }
  return event;
}

TimeWindow::TimeWindow(SimTimestamp lo, SimTimestamp hi) : lo_(lo), hi_(hi) {
  if (lo > hi) {
    throw Error(ErrorCode::WindowInverted, "time window [" + std::to_string(lo.ticks) + ", " +
                                               std::to_string(hi.ticks) + "] is inverted");
  }
}

std::optional<Event> TimeWindow::process(Event event) {
  if (event.ts < lo_ || event.ts > hi_) return std::nullopt;
  return event;
}

std::vector<Event> apply_actors(std::vector<Event> events,
                                const std::vector<std::unique_ptr<Actor>>& actors) {
  std::vector<Event> out;
  out.reserve(events.size());
  for (auto& event : events) {
    std::optional<Event> current(std::move(event));
    for (const auto& actor : actors) {
      current = actor->process(std::move(*current));
      if (!current) break;
    }
    if (current) out.push_back(std::move(*current));
  }
  return out;
}

}  // namespace spanweave
