#pragma once

#include <stdexcept>
#include <string>

namespace deload {

// Process exit codes used by the CLI.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, runtime = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad flags, unreadable or invalid configuration.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ExitCode::usage, what) {}
};

// Malformed input data (traces, records, checkpoints).
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

// Internal failures during simulation or training.
struct RuntimeFault : Error {
  explicit RuntimeFault(const std::string& what) : Error(ExitCode::runtime, what) {}
};

}  // namespace deload
