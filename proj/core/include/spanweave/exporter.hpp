#pragma once

// Span export: Jaeger JSON (for trace UIs), a lossless JSONL format, and
// summary statistics.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spanweave/event_model.hpp"

namespace spanweave {

using Trace = std::vector<Span>;

/// Streaming writer; receives whole traces in emission order.
class TraceWriter {
 public:
  virtual ~TraceWriter() = default;
  virtual void write(const Trace& trace) = 0;
  virtual void finish() = 0;
  std::uint64_t bytes_written() const noexcept { return bytes_; }

 protected:
  void put(std::ostream& out, std::string_view text);

 private:
  std::uint64_t bytes_ = 0;
};

/// `{"data":[<trace>,...]}` with fixed key order; one JSON object per trace.
class JaegerWriter final : public TraceWriter {
 public:
  explicit JaegerWriter(std::ostream& out) : out_(out) {}
  void write(const Trace& trace) override;
  void finish() override;

 private:
  std::ostream& out_;
  bool started_ = false;
  bool finished_ = false;
};

/// Header line `{"spanweave_jsonl":1}`, then one span per line; spans of a
/// trace are ordered by (trace id, start, span id).
class JsonlWriter final : public TraceWriter {
 public:
  explicit JsonlWriter(std::ostream& out);
  void write(const Trace& trace) override;
  void finish() override;

 private:
  std::ostream& out_;
};

std::string jaeger_trace_json(const Trace& trace);
std::string span_to_jsonl(const Span& span);
/// Throws Error{Format}.
Span span_from_jsonl(std::string_view line);

std::string operation_name(const Span& span);

std::uint64_t export_jaeger(const std::vector<Trace>& traces, std::ostream& out);
std::uint64_t export_jsonl(const std::vector<Trace>& traces, std::ostream& out);

/// Loads a JSONL export (header required). Throws Error{Io} / Error{Format}.
std::vector<Span> load_jsonl(std::istream& in);
std::vector<Span> load_jsonl(const std::filesystem::path& path);

/// Groups spans by trace id, keeping the order in which traces first appear.
std::vector<Trace> group_traces(std::vector<Span> spans);

struct SummaryStats {
  std::map<SpanKind, std::uint64_t> spans_per_kind;
  std::map<std::string, std::uint64_t> spans_per_component;
  std::uint64_t traces = 0;
  std::uint64_t spans = 0;
  std::uint64_t max_depth = 0;  // a lone root has depth 1

  friend bool operator==(const SummaryStats&, const SummaryStats&) = default;
};

SummaryStats summarize(const std::vector<Trace>& traces);
std::string summary_json(const SummaryStats& stats);

/// Output file that only appears under its final name after commit(); the
/// temporary is removed if the object dies uncommitted.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() noexcept { return out_; }
  /// Throws Error{Io}.
  void commit();
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

/// Writes `content` to `path` through an AtomicFile.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace spanweave
