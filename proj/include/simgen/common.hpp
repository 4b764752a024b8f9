#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace simgen {

/// Execution policy for the data-parallel kernels. `serial` is the reference
/// path; `parallel` uses OpenMP and must produce bit-identical results.
enum class Exec { serial, parallel };

enum class Task { binary, regression };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double width() const { return hi - lo; }
  [[nodiscard]] bool contains(double x) const { return x >= lo && x <= hi; }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or malformed columns, keys or schema entries.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite parameters or losses during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed for sub-stream `stream` of `base`. Stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Fixed-width text rendering of reals (9 significant digits) for artifacts.
std::string format_real(double value);

/// `value` rounded to the precision format_real writes.
double round_text(double value);

/// 64-bit FNV-1a over a byte string; used as a content id for artifacts.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace simgen
