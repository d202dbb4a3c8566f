#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nqs {

enum class ErrorCode {
    EmptyUserId,
    EmptyQuery,
    UnknownSession,
    NoInteractionYet,
    DuplicateDocId,
    InvalidDocument,
    InvalidRequest,
    BackendUnavailable,
    BackendRefused,
    MalformedTemplate,
    NoSuggestionsParsed,
    ModeMismatch,
    UnknownTask,
    OrphanRecord,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code);

// Category of failure, used to pick HTTP statuses and process exit codes.
enum class ErrorClass { NotFound, Validation, Backend, Internal };

ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace nqs
