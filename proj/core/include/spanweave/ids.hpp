#pragma once

#include <cstdint>
#include <string_view>

#include "spanweave/event_model.hpp"

namespace spanweave {

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic trace id for a new root: hash of the root component, the
/// root span start and the weaver-local root counter.
TraceId make_trace_id(std::string_view root_component, SimTimestamp root_start,
                      std::uint64_t root_counter);

/// Span ids carry the weaver rank in the top 16 bits and a per-weaver
/// sequence below, so they are unique across weavers and never zero.
SpanId make_span_id(std::uint32_t weaver_rank, std::uint64_t sequence);

}  // namespace spanweave
