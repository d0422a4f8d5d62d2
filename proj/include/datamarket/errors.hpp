#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace datamarket {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (empty input, out-of-range K, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Mismatched shapes between inputs that must agree.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Configuration file problems. Carries the offending key and (1-based) line.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, int line, const std::string& what)
      : Error(format(key, line, what)), key_(std::move(key)), line_(line) {}

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& key, int line,
                            const std::string& what) {
    std::string out = "config error";
    if (!key.empty()) out += " at key '" + key + "'";
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    return out + ": " + what;
  }

  std::string key_;
  int line_;
};

// Hash-chain or receipt-chain verification failure.
class IntegrityError : public Error {
 public:
  IntegrityError(std::size_t stage, const std::string& what)
      : Error("integrity error at stage " + std::to_string(stage) + ": " + what),
        stage_(stage) {}

  std::size_t stage() const { return stage_; }

 private:
  std::size_t stage_;
};

// The maximum-entropy solver stopped at max_iterations without meeting the
// gradient tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> last_iterate,
              double residual)
      : Error(what), last_iterate_(std::move(last_iterate)), residual_(residual) {}

  const std::vector<double>& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  std::vector<double> last_iterate_;
  double residual_;
};

// A market operation was rejected (duplicate listing, underpriced bid, ...).
class MarketError : public Error {
 public:
  using Error::Error;
};

}  // namespace datamarket
