#include "spanweave/ids.hpp"

namespace spanweave {

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis) {
  std::uint64_t hash = basis;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

TraceId make_trace_id(std::string_view root_component, SimTimestamp root_start,
                      std::uint64_t root_counter) {
  const std::uint64_t h = fnv1a64(root_component);
  const std::uint64_t a = mix64(h ^ mix64(root_start.ticks));
  const std::uint64_t b = mix64(a ^ mix64(root_counter ^ 0x5bd1e9955bd1e995ULL));
  TraceId id{mix64(b ^ h), mix64(a + root_counter)};
  if (id.hi == 0 && id.lo == 0) id.lo = 1;
  return id;
}

SpanId make_span_id(std::uint32_t weaver_rank, std::uint64_t sequence) {
  return (static_cast<std::uint64_t>(weaver_rank + 1) << 48) |
         ((sequence + 1) & 0x0000ffffffffffffULL);
}

}  // namespace spanweave
