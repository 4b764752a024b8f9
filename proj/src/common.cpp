#include "simgen/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace simgen {

std::string to_string(Task task) {
  return task == Task::binary ? "binary" : "regression";
}

Task task_from_string(const std::string& name) {
  if (name == "binary") return Task::binary;
  if (name == "regression") return Task::regression;
  throw ConfigError("unknown task '" + name + "' (expected binary or regression)");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

double round_text(double value) {
  if (!std::isfinite(value)) return value;
  return std::strtod(format_real(value).c_str(), nullptr);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace simgen
