#include "spanweave/exporter.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "spanweave/errors.hpp"
#include "spanweave/weaver.hpp"

namespace spanweave {
namespace {

using ojson = nlohmann::ordered_json;

std::string_view key_attr(SpanKind kind) {
  switch (kind) {
    case SpanKind::HostSyscall:
      return "name";
    case SpanKind::HostMmio:
    case SpanKind::HostDma:
    case SpanKind::NicMmioSpan:
    case SpanKind::NicDmaSpan:
      return "addr";
    case SpanKind::HostInterrupt:
      return "vec";
    case SpanKind::HostPciConfig:
      return "reg";
    case SpanKind::HostCpuActivity:
      return "unit";
    case SpanKind::NicTxSpan:
    case SpanKind::NicRxSpan:
      return "len";
    case SpanKind::NetHop:
      return "pkt";
  }
  return {};
}

// Output is written straight into a string. Building a DOM per trace was
// dominated by allocation and by ordered_json copying its members on growth.
void put_string(std::string& out, std::string_view text) {
  const bool plain = std::all_of(text.begin(), text.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x20 && u < 0x80 && c != '"' && c != '\\';
  });
  if (plain) {
    out += '"';
    out += text;
    out += '"';
  } else {
    // Escaping and UTF-8 validation stay with the JSON library.
    out += ojson(std::string(text)).dump();
  }
}

void put_u64(std::string& out, std::uint64_t value) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, end);
}

void put_key(std::string& out, std::string_view key) {
  put_string(out, key);
  out += ':';
}

void put_jaeger_tag(std::string& out, std::string_view key, const AttrValue& value) {
  out += "{\"key\":";
  put_string(out, key);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          out += ",\"type\":\"int64\",\"value\":";
          put_u64(out, v);
        } else if constexpr (std::is_same_v<T, Hex>) {
          out += ",\"type\":\"string\",\"value\":";
          put_string(out, format_hex(v.value));
        } else if constexpr (std::is_same_v<T, std::string>) {
          out += ",\"type\":\"string\",\"value\":";
          put_string(out, v);
        } else {
          out += ",\"type\":\"bool\",\"value\":";
          out += v ? "true" : "false";
        }
      },
      value);
  out += '}';
}

void put_attrs(std::string& out, const Attrs& attrs) {
  out += '{';
  bool first = true;
  for (const auto& [key, value] : attrs) {
    if (!first) out += ',';
    first = false;
    put_key(out, key);
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::uint64_t>) {
            put_u64(out, v);
          } else if constexpr (std::is_same_v<T, Hex>) {
            put_string(out, format_hex(v.value));
          } else if constexpr (std::is_same_v<T, std::string>) {
            put_string(out, v);
          } else {
            out += v ? "true" : "false";
          }
        },
        value);
  }
  out += '}';
}

[[noreturn]] void bad_format(const std::string& message) {
  throw Error(ErrorCode::Format, message);
}

std::uint64_t as_u64(const nlohmann::json& j, const char* field) {
  if (!j.is_number_unsigned()) {
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(j.get<std::int64_t>());
    }
    bad_format(std::string("field '") + field + "' must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

const nlohmann::json& at(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) bad_format(std::string("missing field '") + key + "'");
  return *it;
}

std::string as_string(const nlohmann::json& j, const char* field) {
  if (!j.is_string()) bad_format(std::string("field '") + field + "' must be a string");
  return j.get<std::string>();
}

bool canonical_hex(std::string_view text) {
  if (text.size() < 3 || text.size() > 18 || !text.starts_with("0x")) return false;
  for (char c : text.substr(2)) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

Attrs attrs_from_json(const nlohmann::json& obj) {
  if (!obj.is_object()) bad_format("attrs must be an object");
  Attrs attrs;
  for (const auto& item : obj.items()) {
    const auto& v = item.value();
    if (v.is_boolean()) {
      attrs.emplace(item.key(), v.get<bool>());
    } else if (v.is_number_unsigned() || v.is_number_integer()) {
      attrs.emplace(item.key(), as_u64(v, "attrs"));
    } else if (v.is_string()) {
      auto text = v.get<std::string>();
      if (canonical_hex(text)) {
        std::uint64_t value = std::stoull(text.substr(2), nullptr, 16);
        attrs.emplace(item.key(), Hex{value});
      } else {
        attrs.emplace(item.key(), std::move(text));
      }
    } else {
      bad_format("attr '" + item.key() + "' has an unsupported type");
    }
  }
  return attrs;
}

}  // namespace

void TraceWriter::put(std::ostream& out, std::string_view text) {
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed");
  bytes_ += text.size();
}

std::string operation_name(const Span& span) {
  std::string name(to_string(span.kind));
  const auto attr = key_attr(span.kind);
  auto it = span.attrs.find(attr);
  if (it == span.attrs.end()) return name;
  if (std::holds_alternative<std::string>(it->second)) {
    return name + " " + std::get<std::string>(it->second);
  }
  return name + " " + std::string(attr) + "=" + format_attr(it->second);
}

std::string jaeger_trace_json(const Trace& trace) {
  // Process ids follow component id order so they do not depend on which
  // span happens to come first.
  std::set<std::string> component_ids;
  std::map<std::string, ComponentType> component_types;
  for (const auto& span : trace) {
    component_ids.insert(span.component.id);
    component_types[span.component.id] = span.component.type;
  }
  std::map<std::string, std::string> process_of;
  for (const auto& id : component_ids) {
    process_of[id] = "p" + std::to_string(process_of.size() + 1);
  }

  std::string out;
  out.reserve(1024 * trace.size());
  out += "{\"traceID\":";
  put_string(out, trace.empty() ? std::string(32, '0') : trace.front().trace_id.to_hex());
  out += ",\"spans\":[";
  bool first_span = true;
  for (const auto& span : trace) {
    if (!first_span) out += ',';
    first_span = false;
    const auto trace_hex = span.trace_id.to_hex();
    out += "{\"traceID\":";
    put_string(out, trace_hex);
    out += ",\"spanID\":";
    put_string(out, span_id_hex(span.span_id));
    out += ",\"operationName\":";
    put_string(out, operation_name(span));
    out += ",\"references\":[";
    if (span.parent_span_id) {
      out += "{\"refType\":\"CHILD_OF\",\"traceID\":";
      put_string(out, trace_hex);
      out += ",\"spanID\":";
      put_string(out, span_id_hex(*span.parent_span_id));
      out += '}';
    }
    const std::uint64_t start_us = span.start_ts.ticks / kPicosPerMicro;
    const std::uint64_t raw_us = (span.end_ts.ticks - span.start_ts.ticks) / kPicosPerMicro;
    out += "],\"startTime\":";
    put_u64(out, start_us);
    out += ",\"duration\":";
    put_u64(out, std::max<std::uint64_t>(raw_us, 1));
    out += ",\"tags\":[";
    bool first = true;
    for (const auto& [key, value] : span.attrs) {
      if (!first) out += ',';
      first = false;
      put_jaeger_tag(out, key, value);
    }
    if (raw_us < 1) {
      if (!first) out += ',';
      put_jaeger_tag(out, "sub_us_duration", AttrValue{true});
    }
    out += "],\"logs\":[";
    first = true;
    for (const auto& ev : span.events) {
      if (!first) out += ',';
      first = false;
      out += "{\"timestamp\":";
      put_u64(out, ev.ts.ticks / kPicosPerMicro);
      out += ",\"fields\":[";
      put_jaeger_tag(out, "event", AttrValue{std::string(to_string(ev.kind))});
      out += ',';
      put_jaeger_tag(out, "ts_ps", AttrValue{ev.ts.ticks});
      out += ',';
      put_jaeger_tag(out, "seq", AttrValue{ev.seq});
      for (const auto& [key, value] : ev.attrs) {
        out += ',';
        put_jaeger_tag(out, key, value);
      }
      out += "]}";
    }
    out += "],\"processID\":";
    put_string(out, process_of[span.component.id]);
    out += '}';
  }
  out += "],\"processes\":{";
  bool first_process = true;
  for (const auto& [id, pid] : process_of) {
    if (!first_process) out += ',';
    first_process = false;
    put_key(out, pid);
    out += "{\"serviceName\":";
    put_string(out, id);
    out += ",\"tags\":[";
    put_jaeger_tag(out, "component_type", AttrValue{std::string(to_string(component_types[id]))});
    out += "]}";
  }
  out += "}}";
  return out;
}

void JaegerWriter::write(const Trace& trace) {
  put(out_, started_ ? "," : "{\"data\":[");
  started_ = true;
  put(out_, jaeger_trace_json(trace));
}

void JaegerWriter::finish() {
  if (finished_) return;
  finished_ = true;
  if (!started_) put(out_, "{\"data\":[");
  put(out_, "]}");
  out_.flush();
}

std::string span_to_jsonl(const Span& span) {
  std::string out;
  out.reserve(512);
  out += "{\"trace_id\":";
  put_string(out, span.trace_id.to_hex());
  out += ",\"span_id\":";
  put_string(out, span_id_hex(span.span_id));
  out += ",\"parent_span_id\":";
  if (span.parent_span_id) {
    put_string(out, span_id_hex(*span.parent_span_id));
  } else {
    out += "null";
  }
  out += ",\"kind\":";
  put_string(out, to_string(span.kind));
  out += ",\"component\":{\"id\":";
  put_string(out, span.component.id);
  out += ",\"type\":";
  put_string(out, to_string(span.component.type));
  out += "},\"start_ts\":";
  put_u64(out, span.start_ts.ticks);
  out += ",\"end_ts\":";
  put_u64(out, span.end_ts.ticks);
  out += ",\"attrs\":";
  put_attrs(out, span.attrs);
  out += ",\"events\":[";
  bool first = true;
  for (const auto& ev : span.events) {
    if (!first) out += ',';
    first = false;
    out += "{\"seq\":";
    put_u64(out, ev.seq);
    out += ",\"ts\":";
    put_u64(out, ev.ts.ticks);
    out += ",\"kind\":";
    put_string(out, to_string(ev.kind));
    out += ",\"attrs\":";
    put_attrs(out, ev.attrs);
    out += '}';
  }
  out += "]}";
  return out;
}

Span span_from_jsonl(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    bad_format(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad_format("span line must be an object");
  Span span;
  auto trace = TraceId::from_hex(as_string(at(j, "trace_id"), "trace_id"));
  if (!trace) bad_format("bad trace_id");
  span.trace_id = *trace;
  auto id = span_id_from_hex(as_string(at(j, "span_id"), "span_id"));
  if (!id) bad_format("bad span_id");
  span.span_id = *id;
  const auto& parent = at(j, "parent_span_id");
  if (!parent.is_null()) {
    auto pid = span_id_from_hex(as_string(parent, "parent_span_id"));
    if (!pid) bad_format("bad parent_span_id");
    span.parent_span_id = *pid;
  }
  auto kind = span_kind_from_string(as_string(at(j, "kind"), "kind"));
  if (!kind) bad_format("unknown span kind");
  span.kind = *kind;
  const auto& component = at(j, "component");
  if (!component.is_object()) bad_format("component must be an object");
  span.component.id = as_string(at(component, "id"), "component.id");
  auto type = component_type_from_string(as_string(at(component, "type"), "component.type"));
  if (!type) bad_format("unknown component type");
  span.component.type = *type;
  span.start_ts = {as_u64(at(j, "start_ts"), "start_ts")};
  span.end_ts = {as_u64(at(j, "end_ts"), "end_ts")};
  span.attrs = attrs_from_json(at(j, "attrs"));
  const auto& events = at(j, "events");
  if (!events.is_array()) bad_format("events must be an array");
  for (const auto& e : events) {
    if (!e.is_object()) bad_format("event must be an object");
    Event ev;
    ev.seq = as_u64(at(e, "seq"), "seq");
    ev.ts = {as_u64(at(e, "ts"), "ts")};
    auto ek = event_kind_from_string(as_string(at(e, "kind"), "kind"));
    if (!ek) bad_format("unknown event kind");
    ev.kind = *ek;
    ev.component = span.component;
    ev.attrs = attrs_from_json(at(e, "attrs"));
    span.events.push_back(std::move(ev));
  }
  return span;
}

JsonlWriter::JsonlWriter(std::ostream& out) : out_(out) { put(out_, "{\"spanweave_jsonl\":1}\n"); }

void JsonlWriter::write(const Trace& trace) {
  std::vector<const Span*> order;
  order.reserve(trace.size());
  for (const auto& s : trace) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Span* a, const Span* b) {
    if (a->trace_id != b->trace_id) return a->trace_id < b->trace_id;
    return span_order(*a, *b);
  });
  for (const auto* s : order) {
    put(out_, span_to_jsonl(*s));
    put(out_, "\n");
  }
}

void JsonlWriter::finish() { out_.flush(); }

std::uint64_t export_jaeger(const std::vector<Trace>& traces, std::ostream& out) {
  JaegerWriter writer(out);
  for (const auto& t : traces) writer.write(t);
  writer.finish();
  return writer.bytes_written();
}

std::uint64_t export_jsonl(const std::vector<Trace>& traces, std::ostream& out) {
  JsonlWriter writer(out);
  for (const auto& t : traces) writer.write(t);
  writer.finish();
  return writer.bytes_written();
}

std::vector<Span> load_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) bad_format("empty input, expected a spanweave_jsonl header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    bad_format("bad header line");
  }
  if (!header.is_object() || !header.contains("spanweave_jsonl") ||
      header["spanweave_jsonl"] != 1) {
    bad_format("unsupported header, expected {\"spanweave_jsonl\":1}");
  }
  std::vector<Span> spans;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      spans.push_back(span_from_jsonl(line));
    } catch (const Error& e) {
      bad_format("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return spans;
}

std::vector<Span> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  return load_jsonl(in);
}

std::vector<Trace> group_traces(std::vector<Span> spans) {
  std::vector<Trace> out;
  std::map<TraceId, std::size_t> index;
  for (auto& span : spans) {
    auto [it, inserted] = index.try_emplace(span.trace_id, out.size());
    if (inserted) out.emplace_back();
    out[it->second].push_back(std::move(span));
  }
  return out;
}

SummaryStats summarize(const std::vector<Trace>& traces) {
  SummaryStats stats;
  for (const auto& trace : traces) {
    if (trace.empty()) continue;
    ++stats.traces;
    std::unordered_map<SpanId, const Span*> by_id;
    for (const auto& s : trace) by_id.emplace(s.span_id, &s);
    std::unordered_map<SpanId, std::uint64_t> depth;
    for (const auto& s : trace) {
      ++stats.spans;
      ++stats.spans_per_kind[s.kind];
      ++stats.spans_per_component[s.component.id];
      // Walk up until a span with known depth; spans arrive start-ordered so
      // the chain is short in practice.
      std::vector<SpanId> chain;
      const Span* cur = &s;
      std::uint64_t base = 0;
      while (cur != nullptr) {
        if (auto it = depth.find(cur->span_id); it != depth.end()) {
          base = it->second;
          break;
        }
        chain.push_back(cur->span_id);
        if (chain.size() > trace.size()) break;  // cycle guard
        cur = cur->parent_span_id && by_id.contains(*cur->parent_span_id)
                  ? by_id[*cur->parent_span_id]
                  : nullptr;
      }
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) depth[*it] = ++base;
      stats.max_depth = std::max(stats.max_depth, depth[s.span_id]);
    }
  }
  return stats;
}

std::string summary_json(const SummaryStats& stats) {
  ojson j;
  j["traces"] = stats.traces;
  j["spans"] = stats.spans;
  j["max_depth"] = stats.max_depth;
  auto& kinds = j["spans_per_kind"] = ojson::object();
  for (const auto& [kind, n] : stats.spans_per_kind) kinds[std::string(to_string(kind))] = n;
  auto& comps = j["spans_per_component"] = ojson::object();
  for (const auto& [id, n] : stats.spans_per_component) comps[id] = n;
  return j.dump(2);
}

AtomicFile::AtomicFile(std::filesystem::path path) : path_(std::move(path)) {
  temp_ = path_;
  temp_ += ".tmp." + std::to_string(::getpid());
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  out_.open(temp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::Io, "cannot create '" + temp_.string() + "'");
}

AtomicFile::~AtomicFile() {
  if (committed_) return;
  out_.close();
  std::error_code ec;
  std::filesystem::remove(temp_, ec);
}

void AtomicFile::commit() {
  out_.flush();
  out_.close();
  if (!out_) throw Error(ErrorCode::Io, "write failed for '" + path_.string() + "'");
  std::error_code ec;
  std::filesystem::rename(temp_, path_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename to '" + path_.string() + "': " + ec.message());
  committed_ = true;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  AtomicFile file(path);
  file.stream().write(content.data(), static_cast<std::streamsize>(content.size()));
  file.commit();
}

}  // namespace spanweave
