// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace m2gl {

/// Broad failure classes. The CLI maps each one to a process exit code.
enum class ErrorKind {
  kInternal = 1,
  kInput = 2,
  kData = 3,
  kCompatibility = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define M2GL_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

// Tensor shapes that do not line up.
M2GL_DEFINE_ERROR(ShapeError, kInternal)
// Math outside an operation's domain (log of a non-positive value, NaN output).
M2GL_DEFINE_ERROR(DomainError, kInternal)
// A violated precondition on an API call.
M2GL_DEFINE_ERROR(ContractError, kInput)
// NaN/Inf gradient reaching the optimizer.
M2GL_DEFINE_ERROR(PoisonedStateError, kInternal)
// Bad user input: flags, lengths, missing sources.
M2GL_DEFINE_ERROR(InputError, kInput)
// Unknown group at prediction time.
M2GL_DEFINE_ERROR(RoutingError, kInput)
// Malformed or inconsistent data files.
M2GL_DEFINE_ERROR(DataError, kData)
// Damaged checkpoint or adapter files.
M2GL_DEFINE_ERROR(CorruptionError, kData)
// File written by a newer format version.
M2GL_DEFINE_ERROR(VersionError, kCompatibility)
// Adapter bound to a different backbone.
M2GL_DEFINE_ERROR(CompatibilityError, kCompatibility)

#undef M2GL_DEFINE_ERROR

}  // namespace m2gl
