#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spikeshort {

enum class ErrorKind {
  dimension,
  configuration,
  input,
  numeric,
  state,
  format,
  consistency,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix, for re-raising with more context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace spikeshort
