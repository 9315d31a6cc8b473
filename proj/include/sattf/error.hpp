// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <stdexcept>
#include <string>

namespace sattf {

/// Broad failure classes shared by every module and mirrored by the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Parse = 2,
  Io = 3,
  Compile = 4,
  Eval = 5,
  Runtime = 6,
};

/// Base exception carrying an ErrorCode.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Malformed text or token stream; `location` is a token index, or -1 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long location)
      : Error(ErrorCode::Parse, what + (location >= 0 ? " (at token " + std::to_string(location) + ")" : "")),
        location_(location) {}
  long location() const noexcept { return location_; }

 private:
  long location_;
};

}  // namespace sattf
