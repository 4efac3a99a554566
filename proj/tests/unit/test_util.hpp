#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spanweave/config.hpp"
#include "spanweave/exporter.hpp"
#include "spanweave/runner.hpp"

namespace spanweave::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string templ = (std::filesystem::temp_directory_path() / "spanweave-test-XXXXXX").string();
    if (mkdtemp(templ.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct RunResult {
  RunStats stats;
  std::vector<Trace> traces;
};

inline RunResult run_collect(const WiringConfig& config, const RunControl& control = {}) {
  RunResult r;
  r.stats = run_graph(config, [&](Trace&& t) { r.traces.push_back(std::move(t)); }, control);
  return r;
}

/// Writes each log into `dir` and runs the config text (paths relative to dir).
inline RunResult run_logs(const TempDir& dir, const std::string& config_json,
                          const std::map<std::string, std::string>& logs,
                          const RunControl& control = {}) {
  for (const auto& [name, text] : logs) write_text(dir / name, text);
  return run_collect(parse_config(config_json, dir.path()), control);
}

inline std::vector<Span> all_spans(const std::vector<Trace>& traces) {
  std::vector<Span> out;
  for (const auto& t : traces) out.insert(out.end(), t.begin(), t.end());
  return out;
}

/// Host + NIC wired over PCIe, host log host0.log, NIC log nic0.log.
inline const char* kHostNicConfig = R"({
  "components": [{"id": "host0", "type": "host"}, {"id": "nic0", "type": "nic"}],
  "sources": [{"component": "host0", "path": "host0.log", "dialect": "host"},
              {"component": "nic0", "path": "nic0.log", "dialect": "nic"}],
  "channels": [{"a": {"component": "host0"}, "b": {"component": "nic0"}, "boundary": "pcie"}]
})";

inline const char* kHostOnlyConfig = R"({
  "components": [{"id": "host0", "type": "host"}],
  "sources": [{"component": "host0", "path": "host0.log", "dialect": "host"}]
})";

}  // namespace spanweave::testing
