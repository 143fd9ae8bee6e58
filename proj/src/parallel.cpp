#include "tsrkoop/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace tsrkoop {

int resolve_workers(int requested) {
  if (const char* env = std::getenv(kWorkersEnv)) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // ignored: fall through to the requested value
    }
  }
  return requested > 0 ? requested : omp_get_max_threads();
}

std::vector<ChunkRange> fixed_chunks(std::size_t count, std::size_t chunk) {
  std::vector<ChunkRange> out;
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t b = 0; b < count; b += chunk) {
    out.push_back({b, std::min(count, b + chunk)});
  }
  return out;
}

}  // namespace tsrkoop
