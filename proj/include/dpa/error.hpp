// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dpa {

// Category names double as the CLI's error-line prefix.
enum class ErrorKind {
  Parse,
  Format,
  DimensionMismatch,
  InvalidTrace,
  Config,
  Schema,
  Io,
  Checksum,
  Training,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Format: return "format";
    case ErrorKind::DimensionMismatch: return "dimension";
    case ErrorKind::InvalidTrace: return "trace";
    case ErrorKind::Config: return "config";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Io: return "io";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Training: return "training";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DPA_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

DPA_DEFINE_ERROR(ParseError, Parse)
DPA_DEFINE_ERROR(FormatError, Format)
DPA_DEFINE_ERROR(DimensionMismatch, DimensionMismatch)
DPA_DEFINE_ERROR(InvalidTrace, InvalidTrace)
DPA_DEFINE_ERROR(ConfigError, Config)
DPA_DEFINE_ERROR(SchemaError, Schema)
DPA_DEFINE_ERROR(IoError, Io)
DPA_DEFINE_ERROR(ChecksumError, Checksum)
DPA_DEFINE_ERROR(TrainingError, Training)

#undef DPA_DEFINE_ERROR

}  // namespace dpa
