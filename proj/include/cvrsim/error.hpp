#pragma once

#include <stdexcept>
#include <string>

namespace cvrsim {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries file, line and field.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& field,
             const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": field '" + field + "': " + what),
        file_(file),
        line_(line),
        field_(field) {}

  const std::string& file() const noexcept { return file_; }
  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  int line_;
  std::string field_;
};

}  // namespace cvrsim
