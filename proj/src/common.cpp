#include "sgsplat/common.hpp"

#include <cstdlib>

namespace sgsplat {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SGSPLAT_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && parsed > 0) {
      return static_cast<int>(parsed);
    }
    throw InvalidInput("SGSPLAT_THREADS must be a positive integer");
  }
  return 1;
}

}  // namespace sgsplat
