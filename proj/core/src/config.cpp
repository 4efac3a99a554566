#include "spanweave/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spanweave/errors.hpp"

namespace spanweave {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::Config, field + ": " + message);
}

const json& require(const json& obj, const char* key, const std::string& field) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(field + "." + key, "missing");
  return *it;
}

std::string get_string(const json& value, const std::string& field) {
  if (!value.is_string()) fail(field, "expected a string");
  return value.get<std::string>();
}

std::uint64_t get_u64(const json& value, const std::string& field) {
  if (!value.is_number_unsigned()) {
    if (value.is_number_integer() && value.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(value.get<std::int64_t>());
    }
    fail(field, "expected a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

void expect_object(const json& value, const std::string& field) {
  if (!value.is_object()) fail(field, "expected an object");
}

void expect_array(const json& value, const std::string& field) {
  if (!value.is_array()) fail(field, "expected an array");
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& field) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || item.key() == k;
    if (!ok) fail(field + "." + item.key(), "unknown field");
  }
}

std::filesystem::path resolve_path(const std::string& text, const std::filesystem::path& base) {
  std::filesystem::path p(text);
  if (p.is_relative() && !base.empty()) return base / p;
  return p;
}

Endpoint parse_endpoint(const json& value, const std::string& field) {
  expect_object(value, field);
  reject_unknown(value, {"component", "dev"}, field);
  Endpoint ep;
  ep.component = get_string(require(value, "component", field), field + ".component");
  if (auto it = value.find("dev"); it != value.end()) ep.dev = get_string(*it, field + ".dev");
  return ep;
}

std::vector<EventKind> parse_kinds(const json& value, const std::string& field) {
  expect_array(value, field);
  std::vector<EventKind> kinds;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const auto name = get_string(value[i], field + "[" + std::to_string(i) + "]");
    auto kind = event_kind_from_string(name);
    if (!kind) fail(field + "[" + std::to_string(i) + "]", "unknown event kind '" + name + "'");
    kinds.push_back(*kind);
  }
  return kinds;
}

ActorSpec parse_actor(const json& value, const std::string& field,
                      const std::filesystem::path& base) {
  expect_object(value, field);
  ActorSpec actor;
  actor.type = get_string(require(value, "type", field), field + ".type");
  if (actor.type == "filter_kinds") {
    reject_unknown(value, {"type", "keep", "drop"}, field);
    const bool has_keep = value.contains("keep");
    const bool has_drop = value.contains("drop");
    if (has_keep == has_drop) fail(field, "filter_kinds needs exactly one of 'keep' or 'drop'");
    if (has_keep) actor.keep = parse_kinds(value["keep"], field + ".keep");
    if (has_drop) actor.drop = parse_kinds(value["drop"], field + ".drop");
  } else if (actor.type == "resolve_symbols") {
    reject_unknown(value, {"type", "symbols"}, field);
    actor.symbols =
        resolve_path(get_string(require(value, "symbols", field), field + ".symbols"), base);
  } else if (actor.type == "time_window") {
    reject_unknown(value, {"type", "lo", "hi"}, field);
    if (auto it = value.find("lo"); it != value.end()) actor.lo = {get_u64(*it, field + ".lo")};
    if (auto it = value.find("hi"); it != value.end()) actor.hi = {get_u64(*it, field + ".hi")};
  } else {
    fail(field + ".type", "unknown actor type '" + actor.type + "'");
  }
  return actor;
}

ExportSpec parse_export(const json& value, const std::string& field,
                        const std::filesystem::path& base) {
  expect_object(value, field);
  reject_unknown(value, {"format", "path"}, field);
  ExportSpec spec;
  const auto format = get_string(require(value, "format", field), field + ".format");
  if (format == "jaeger") {
    spec.format = ExportFormat::Jaeger;
  } else if (format == "jsonl") {
    spec.format = ExportFormat::Jsonl;
  } else {
    fail(field + ".format", "expected 'jaeger' or 'jsonl', got '" + format + "'");
  }
  const auto path = get_string(require(value, "path", field), field + ".path");
  if (path.empty()) fail(field + ".path", "must not be empty");
  spec.path = resolve_path(path, base);
  return spec;
}

void parse_options(const json& value, RunOptions& options) {
  const std::string field = "options";
  expect_object(value, field);
  reject_unknown(value,
                 {"queue_capacity", "channel_capacity", "causality_window_ps", "reorder_buffer",
                  "execution"},
                 field);
  auto positive = [&](const char* key, auto& out) {
    if (auto it = value.find(key); it != value.end()) {
      const auto v = get_u64(*it, field + "." + key);
      if (v == 0) fail(field + "." + key, "must be positive");
      out = static_cast<std::remove_reference_t<decltype(out)>>(v);
    }
  };
  positive("queue_capacity", options.queue_capacity);
  positive("channel_capacity", options.channel_capacity);
  positive("causality_window_ps", options.causality_window_ps);
  if (auto it = value.find("reorder_buffer"); it != value.end()) {
    options.reorder_buffer = get_u64(*it, field + ".reorder_buffer");
  }
  if (auto it = value.find("execution"); it != value.end()) {
    const auto text = get_string(*it, field + ".execution");
    if (text == "auto") {
      options.execution = Execution::Auto;
    } else if (text == "concurrent") {
      options.execution = Execution::Concurrent;
    } else if (text == "single_threaded") {
      options.execution = Execution::SingleThreaded;
    } else {
      fail(field + ".execution", "expected auto, concurrent or single_threaded");
    }
  }
}

json endpoint_json(const Endpoint& ep) {
  json out = json::object();
  out["component"] = ep.component;
  if (!ep.dev.empty()) out["dev"] = ep.dev;
  return out;
}

}  // namespace

std::string_view to_string(ExportFormat format) {
  return format == ExportFormat::Jaeger ? "jaeger" : "jsonl";
}

std::optional<std::size_t> WiringConfig::rank_of(std::string_view id) const {
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i].id == id) return i;
  }
  return std::nullopt;
}

const ComponentRef* WiringConfig::component(std::string_view id) const {
  auto rank = rank_of(id);
  return rank ? &components[*rank] : nullptr;
}

void validate_config(const WiringConfig& config) {
  std::set<std::string, std::less<>> ids;
  for (std::size_t i = 0; i < config.components.size(); ++i) {
    const auto& c = config.components[i];
    const auto field = "components[" + std::to_string(i) + "]";
    if (!is_ident(c.id)) fail(field + ".id", "'" + c.id + "' is not a valid identifier");
    if (!ids.insert(c.id).second) fail(field + ".id", "duplicate component '" + c.id + "'");
  }

  std::set<std::string, std::less<>> with_source;
  for (std::size_t i = 0; i < config.sources.size(); ++i) {
    const auto& s = config.sources[i];
    const auto field = "sources[" + std::to_string(i) + "]";
    const auto* c = config.component(s.component.id);
    if (c == nullptr) fail(field + ".component", "unknown component '" + s.component.id + "'");
    if (component_type_of(s.dialect) != c->type) {
      fail(field + ".dialect", "dialect '" + std::string(to_string(s.dialect)) +
                                   "' does not fit " + std::string(to_string(c->type)) +
                                   " component '" + c->id + "'");
    }
    if (!with_source.insert(s.component.id).second) {
      fail(field + ".component", "component '" + s.component.id + "' has more than one source");
    }
  }
  for (const auto& c : config.components) {
    if (!with_source.contains(c.id)) fail("sources", "component '" + c.id + "' has no source");
  }

  // Adjacency for route checks and connectivity.
  std::map<std::string, std::set<std::string>, std::less<>> adjacent;
  std::set<std::pair<std::string, std::string>> ports;
  auto claim_port = [&](const Endpoint& ep, const std::string& field) {
    if (!ports.emplace(ep.component, ep.dev).second) {
      fail(field, "port " + ep.component + "/" + ep.dev + " is already connected");
    }
  };
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const auto& ch = config.channels[i];
    const auto field = "channels[" + std::to_string(i) + "]";
    const ComponentRef* ends[2] = {nullptr, nullptr};
    const Endpoint* eps[2] = {&ch.a, &ch.b};
    for (int side = 0; side < 2; ++side) {
      const auto sub = field + (side == 0 ? ".a" : ".b");
      ends[side] = config.component(eps[side]->component);
      if (ends[side] == nullptr) {
        fail(sub + ".component", "unknown component '" + eps[side]->component + "'");
      }
      const bool network = ends[side]->type == ComponentType::Network;
      if (network && !is_ident(eps[side]->dev)) fail(sub + ".dev", "network endpoints need a dev");
      if (!network && !eps[side]->dev.empty()) {
        fail(sub + ".dev", "only network endpoints take a dev");
      }
      if (network) claim_port(*eps[side], sub);
    }
    if (ch.a.component == ch.b.component) fail(field, "channel connects a component to itself");
    const auto ta = ends[0]->type;
    const auto tb = ends[1]->type;
    if (ch.boundary == Boundary::Pcie) {
      const bool ok = (ta == ComponentType::Host && tb == ComponentType::Nic) ||
                      (ta == ComponentType::Nic && tb == ComponentType::Host);
      if (!ok) fail(field + ".boundary", "pcie channels connect a host and a nic");
    } else {
      const bool ok = (ta != ComponentType::Host && tb != ComponentType::Host) &&
                      !(ta == ComponentType::Nic && tb == ComponentType::Nic);
      if (!ok) fail(field + ".boundary", "eth channels connect nics and network components");
    }
    if (adjacent[ch.a.component].contains(ch.b.component)) {
      fail(field, "duplicate channel between '" + ch.a.component + "' and '" + ch.b.component + "'");
    }
    adjacent[ch.a.component].insert(ch.b.component);
    adjacent[ch.b.component].insert(ch.a.component);
  }

  for (std::size_t i = 0; i < config.externals.size(); ++i) {
    const auto& ext = config.externals[i];
    const auto field = "externals[" + std::to_string(i) + "]";
    if (!is_ident(ext.id)) fail(field + ".id", "'" + ext.id + "' is not a valid identifier");
    if (!ids.insert(ext.id).second) fail(field + ".id", "duplicate id '" + ext.id + "'");
    const auto* c = config.component(ext.attach.component);
    if (c == nullptr) {
      fail(field + ".attach.component", "unknown component '" + ext.attach.component + "'");
    }
    if (c->type != ComponentType::Network || !is_ident(ext.attach.dev)) {
      fail(field + ".attach", "externals attach to a network component port");
    }
    claim_port(ext.attach, field + ".attach");
    adjacent[ext.id].insert(c->id);
    adjacent[c->id].insert(ext.id);
  }

  for (std::size_t i = 0; i < config.routes.size(); ++i) {
    const auto& route = config.routes[i];
    const auto field = "routes[" + std::to_string(i) + "].hops";
    if (route.hops.size() < 2) fail(field, "a route needs at least two hops");
    for (std::size_t h = 0; h < route.hops.size(); ++h) {
      const auto& hop = route.hops[h];
      const auto hop_field = field + "[" + std::to_string(h) + "]";
      if (!ids.contains(hop)) fail(hop_field, "unknown component '" + hop + "'");
      if (h > 0 && !adjacent[route.hops[h - 1]].contains(hop)) {
        fail(hop_field, "'" + route.hops[h - 1] + "' and '" + hop + "' are not connected");
      }
    }
  }

  for (const auto& [component, chain] : config.actors) {
    if (config.component(component) == nullptr) {
      fail("actors." + component, "unknown component '" + component + "'");
    }
    (void)chain;
  }

  if (config.components.size() > 1) {
    std::set<std::string> seen{config.components.front().id};
    std::vector<std::string> todo{config.components.front().id};
    while (!todo.empty()) {
      const auto cur = todo.back();
      todo.pop_back();
      for (const auto& next : adjacent[cur]) {
        if (config.component(next) != nullptr && seen.insert(next).second) todo.push_back(next);
      }
    }
    for (const auto& c : config.components) {
      if (!seen.contains(c.id)) fail("channels", "component '" + c.id + "' is not connected");
    }
  }
}

WiringConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("config", std::string("invalid JSON: ") + e.what());
  }
  expect_object(doc, "config");
  reject_unknown(doc,
                 {"components", "sources", "channels", "externals", "routes", "actors", "exporter",
                  "mode", "options"},
                 "config");

  WiringConfig config;
  if (auto it = doc.find("components"); it != doc.end()) {
    expect_array(*it, "components");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "components[" + std::to_string(i) + "]";
      const auto& item = (*it)[i];
      expect_object(item, field);
      reject_unknown(item, {"id", "type"}, field);
      ComponentRef ref;
      ref.id = get_string(require(item, "id", field), field + ".id");
      const auto type = get_string(require(item, "type", field), field + ".type");
      auto parsed = component_type_from_string(type);
      if (!parsed) fail(field + ".type", "expected host, nic or network, got '" + type + "'");
      ref.type = *parsed;
      config.components.push_back(std::move(ref));
    }
  }

  if (auto it = doc.find("sources"); it != doc.end()) {
    expect_array(*it, "sources");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "sources[" + std::to_string(i) + "]";
      const auto& item = (*it)[i];
      expect_object(item, field);
      reject_unknown(item, {"component", "path", "dialect"}, field);
      LogSource source;
      source.component.id = get_string(require(item, "component", field), field + ".component");
      const auto path = get_string(require(item, "path", field), field + ".path");
      if (path.empty()) fail(field + ".path", "must not be empty");
      source.path = resolve_path(path, base_dir);
      const auto dialect_text = get_string(require(item, "dialect", field), field + ".dialect");
      auto dialect = dialect_from_string(dialect_text);
      if (!dialect) fail(field + ".dialect", "expected host, nic or net, got '" + dialect_text + "'");
      source.dialect = *dialect;
      if (const auto* c = config.component(source.component.id)) {
        source.component = *c;
      } else {
        fail(field + ".component", "unknown component '" + source.component.id + "'");
      }
      config.sources.push_back(std::move(source));
    }
  }

  if (auto it = doc.find("channels"); it != doc.end()) {
    expect_array(*it, "channels");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "channels[" + std::to_string(i) + "]";
      const auto& item = (*it)[i];
      expect_object(item, field);
      reject_unknown(item, {"a", "b", "boundary"}, field);
      ChannelSpec ch;
      ch.a = parse_endpoint(require(item, "a", field), field + ".a");
      ch.b = parse_endpoint(require(item, "b", field), field + ".b");
      const auto boundary = get_string(require(item, "boundary", field), field + ".boundary");
      auto parsed = boundary_from_string(boundary);
      if (!parsed) fail(field + ".boundary", "expected pcie or eth, got '" + boundary + "'");
      ch.boundary = *parsed;
      config.channels.push_back(std::move(ch));
    }
  }

  if (auto it = doc.find("externals"); it != doc.end()) {
    expect_array(*it, "externals");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "externals[" + std::to_string(i) + "]";
      const auto& item = (*it)[i];
      expect_object(item, field);
      reject_unknown(item, {"id", "attach"}, field);
      ExternalSpec ext;
      ext.id = get_string(require(item, "id", field), field + ".id");
      ext.attach = parse_endpoint(require(item, "attach", field), field + ".attach");
      config.externals.push_back(std::move(ext));
    }
  }

  if (auto it = doc.find("routes"); it != doc.end()) {
    expect_array(*it, "routes");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "routes[" + std::to_string(i) + "]";
      const auto& item = (*it)[i];
      expect_object(item, field);
      reject_unknown(item, {"hops"}, field);
      const auto& hops = require(item, "hops", field);
      expect_array(hops, field + ".hops");
      RouteSpec route;
      for (std::size_t h = 0; h < hops.size(); ++h) {
        route.hops.push_back(get_string(hops[h], field + ".hops[" + std::to_string(h) + "]"));
      }
      config.routes.push_back(std::move(route));
    }
  }

  if (auto it = doc.find("actors"); it != doc.end()) {
    expect_object(*it, "actors");
    for (const auto& item : it->items()) {
      const auto field = "actors." + item.key();
      expect_array(item.value(), field);
      auto& chain = config.actors[item.key()];
      for (std::size_t i = 0; i < item.value().size(); ++i) {
        chain.push_back(
            parse_actor(item.value()[i], field + "[" + std::to_string(i) + "]", base_dir));
      }
    }
  }

  if (auto it = doc.find("exporter"); it != doc.end()) {
    if (it->is_array()) {
      for (std::size_t i = 0; i < it->size(); ++i) {
        config.exports.push_back(
            parse_export((*it)[i], "exporter[" + std::to_string(i) + "]", base_dir));
      }
    } else {
      config.exports.push_back(parse_export(*it, "exporter", base_dir));
    }
  }

  if (auto it = doc.find("mode"); it != doc.end()) {
    const auto mode = get_string(*it, "mode");
    if (mode == "online") {
      config.online = true;
    } else if (mode != "offline") {
      fail("mode", "expected offline or online, got '" + mode + "'");
    }
  }

  if (auto it = doc.find("options"); it != doc.end()) parse_options(*it, config.options);

  validate_config(config);
  return config;
}

WiringConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string dump_config(const WiringConfig& config) {
  nlohmann::ordered_json doc;
  auto& components = doc["components"] = nlohmann::ordered_json::array();
  for (const auto& c : config.components) {
    components.push_back({{"id", c.id}, {"type", std::string(to_string(c.type))}});
  }
  auto& sources = doc["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : config.sources) {
    sources.push_back({{"component", s.component.id},
                       {"path", s.path.generic_string()},
                       {"dialect", std::string(to_string(s.dialect))}});
  }
  auto& channels = doc["channels"] = nlohmann::ordered_json::array();
  for (const auto& ch : config.channels) {
    nlohmann::ordered_json item;
    item["a"] = endpoint_json(ch.a);
    item["b"] = endpoint_json(ch.b);
    item["boundary"] = std::string(to_string(ch.boundary));
    channels.push_back(std::move(item));
  }
  auto& externals = doc["externals"] = nlohmann::ordered_json::array();
  for (const auto& ext : config.externals) {
    nlohmann::ordered_json item;
    item["id"] = ext.id;
    item["attach"] = endpoint_json(ext.attach);
    externals.push_back(std::move(item));
  }
  auto& routes = doc["routes"] = nlohmann::ordered_json::array();
  for (const auto& r : config.routes) routes.push_back({{"hops", r.hops}});
  if (!config.actors.empty()) {
    auto& actors = doc["actors"] = nlohmann::ordered_json::object();
    for (const auto& [component, chain] : config.actors) {
      auto& list = actors[component] = nlohmann::ordered_json::array();
      for (const auto& a : chain) {
        nlohmann::ordered_json item;
        item["type"] = a.type;
        auto names = [](const std::vector<EventKind>& kinds) {
          std::vector<std::string> out;
          for (auto k : kinds) out.emplace_back(to_string(k));
          return out;
        };
        if (a.type == "filter_kinds") {
          if (!a.keep.empty() || a.drop.empty()) item["keep"] = names(a.keep);
          if (!a.drop.empty()) item["drop"] = names(a.drop);
        } else if (a.type == "resolve_symbols") {
          item["symbols"] = a.symbols.generic_string();
        } else {
          item["lo"] = a.lo.ticks;
          item["hi"] = a.hi.ticks;
        }
        list.push_back(std::move(item));
      }
    }
  }
  auto& exporter = doc["exporter"] = nlohmann::ordered_json::array();
  for (const auto& e : config.exports) {
    exporter.push_back({{"format", std::string(to_string(e.format))}, {"path", e.path.generic_string()}});
  }
  doc["mode"] = config.online ? "online" : "offline";
  const auto& o = config.options;
  nlohmann::ordered_json options;
  options["queue_capacity"] = o.queue_capacity;
  options["channel_capacity"] = o.channel_capacity;
  options["causality_window_ps"] = o.causality_window_ps;
  if (o.reorder_buffer != 0) options["reorder_buffer"] = o.reorder_buffer;
  if (o.execution != Execution::Auto) {
    options["execution"] = o.execution == Execution::Concurrent ? "concurrent" : "single_threaded";
  }
  doc["options"] = std::move(options);
  return doc.dump(2) + "\n";
}

}  // namespace spanweave
