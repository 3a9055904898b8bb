#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace platefind {

// Closed set of failure kinds. The names returned by error_code_name() are
// part of the HTTP contract and must not change.
enum class ErrorCode {
  EmptyPlate,
  UnknownCategory,
  InvalidArgument,
  EmptyImage,
  BackendFailure,
  MalformedAnnotation,
  UnknownImage,
  InvalidMap,
  DegenerateQuad,
  NoCharactersFound,
  ModelFailure,
  InsufficientData,
  InvalidConfusionTable,
  CorruptStore,
  DuplicateRecordId,
  UndecodableImage,
  StoreUnavailable,
  IoError,
  NoPlateFound,
  RecordNotFound,
  CropNotFound,
  JobNotFound,
  MalformedRequest,
  InvalidFuzz,
  InvalidLimit,
  InvalidPagination,
  UnknownEndpoint,
};

std::string_view error_code_name(ErrorCode code);
/// Inverse of error_code_name; nullopt for unknown names.
std::optional<ErrorCode> parse_error_code(std::string_view name);
/// Every code in declaration order.
const std::vector<ErrorCode>& all_error_codes();

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace platefind
