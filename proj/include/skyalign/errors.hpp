#pragma once

#include <stdexcept>
#include <string>

namespace skyalign {

// Bad configuration, out-of-range values, schema violations. CLI exit code 1.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing files, NaN aborts, failures mid-run. CLI exit code 2.
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input line; carries the file path and 1-based line number.
struct ParseError : ValidationError {
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : ValidationError(path + ":" + std::to_string(line) + ": " + what),
        path(path),
        line(line) {}
  std::string path;
  std::size_t line;
};

}  // namespace skyalign
