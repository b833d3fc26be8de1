// Apache License, Version 2.0, refer to LICENSE.txt

#include "hmte/limits.hpp"

#include <cstdlib>
#include <mutex>

namespace hmte {

namespace {

Limits& mutable_limits() {
  static Limits instance = [] {
    Limits l;
    if (const char* env = std::getenv("HYBRID_MTE_MAX_PIECES")) {
      char* end = nullptr;
      const long long v = std::strtoll(env, &end, 10);
      if (end != env && v > 0) l.max_pieces = static_cast<std::size_t>(v);
    }
    return l;
  }();
  return instance;
}

}  // namespace

const Limits& limits() { return mutable_limits(); }

void set_limits(const Limits& l) { mutable_limits() = l; }

}  // namespace hmte
