#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seqdream {

// Error categories; the CLI maps each kind to a distinct exit code.
enum class ErrorKind {
  usage,     // bad command line
  config,    // missing/invalid configuration key
  io,        // unreadable/unwritable path
  parse,     // malformed data file
  shape,     // tensor/dataset dimension mismatch
  weights_missing,
  weights_corrupt,
  weights_version,
  numeric,   // non-finite values, invalid math arguments
  state,     // operation not valid in current state
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

// Shortest exact decimal form: parsing the result with strtod recovers the
// identical bits. Used everywhere a double is written to a file.
std::string fmt_double(double v);

// splitmix64 step; used to derive independent per-run seeds from a base seed.
uint64_t mix_seed(uint64_t base, uint64_t salt);

}  // namespace seqdream
