#pragma once

#include <cstddef>
#include <vector>

namespace tsrkoop {

/// Environment variable that overrides every worker-count setting.
inline constexpr const char* kWorkersEnv = "TSRKOOP_WORKERS";

/// Returns the worker count to use: the TSRKOOP_WORKERS override when set to a
/// positive integer, otherwise `requested` (0 means the OpenMP default).
int resolve_workers(int requested);

/// Contiguous index ranges of at most `chunk` elements covering [0, count).
/// Reductions sum per-chunk partials in chunk order, so results do not depend
/// on how many threads processed the chunks.
struct ChunkRange {
  std::size_t begin;
  std::size_t end;
};
std::vector<ChunkRange> fixed_chunks(std::size_t count, std::size_t chunk);

}  // namespace tsrkoop
