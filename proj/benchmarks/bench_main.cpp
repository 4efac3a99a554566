#include <benchmark/benchmark.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "spanweave/analysis.hpp"
#include "spanweave/exporter.hpp"
#include "spanweave/parsers.hpp"
#include "spanweave/runner.hpp"
#include "spanweave/simgen.hpp"

namespace fs = std::filesystem;
using namespace spanweave;

namespace {

struct Fixture {
  fs::path dir;
  GeneratedScenario gen;
  WiringConfig config;
  std::uint64_t events = 0;

  explicit Fixture(std::uint64_t requests) {
    std::string templ = (fs::temp_directory_path() / "spanweave-bench-XXXXXX").string();
    if (mkdtemp(templ.data()) == nullptr) std::abort();
    dir = templ;
    gen = generate_scenario({ScenarioName::RpcBackground, 1, requests});
    config = load_config(write_scenario(gen, dir).wiring);
    config.exports.clear();
    events = gen.truth.events.size();
  }
  ~Fixture() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

const Fixture& fixture() {
  static Fixture f(400);
  return f;
}

void BM_ParseHostLine(benchmark::State& state) {
  const ComponentRef host{"host0", ComponentType::Host};
  const std::string line = "1000900: cpu0: MMIO_W addr=0x40001000 size=4 val=0x1 id=3";
  for (auto _ : state) benchmark::DoNotOptimize(parse_host_line(line, host));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ParseHostLine);

void BM_ParseNetLine(benchmark::State& state) {
  const ComponentRef sw{"switch0", ComponentType::Network};
  const std::string line = "+0.000001003s switch0/dev1 ENQ pkt=17 len=90";
  for (auto _ : state) benchmark::DoNotOptimize(parse_net_line(line, sw));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ParseNetLine);

void BM_Pipeline(benchmark::State& state) {
  const auto& f = fixture();
  const RunControl control{static_cast<Execution>(state.range(0)), std::nullopt};
  for (auto _ : state) {
    std::uint64_t spans = 0;
    run_graph(f.config, [&](Trace&& t) { spans += t.size(); }, control);
    benchmark::DoNotOptimize(spans);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.events));
}
BENCHMARK(BM_Pipeline)
    ->Arg(static_cast<int>(Execution::SingleThreaded))
    ->Arg(static_cast<int>(Execution::Concurrent))
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_ExportJaeger(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<Trace> traces;
  run_graph(f.config, [&](Trace&& t) { traces.push_back(std::move(t)); });
  for (auto _ : state) {
    std::ostringstream out;
    benchmark::DoNotOptimize(export_jaeger(traces, out));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * traces.size()));
}
BENCHMARK(BM_ExportJaeger)->Unit(benchmark::kMillisecond);

void BM_Breakdown(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<Trace> traces;
  run_graph(f.config, [&](Trace&& t) { traces.push_back(std::move(t)); });
  for (auto _ : state) benchmark::DoNotOptimize(breakdown_requests(traces, f.config.routes));
}
BENCHMARK(BM_Breakdown)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_scenario({ScenarioName::RpcBackground, 1, 100}));
  }
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
