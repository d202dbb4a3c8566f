#include "nqs/error.hpp"

namespace nqs {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyUserId: return "EmptyUserId";
        case ErrorCode::EmptyQuery: return "EmptyQuery";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::NoInteractionYet: return "NoInteractionYet";
        case ErrorCode::DuplicateDocId: return "DuplicateDocId";
        case ErrorCode::InvalidDocument: return "InvalidDocument";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::BackendRefused: return "BackendRefused";
        case ErrorCode::MalformedTemplate: return "MalformedTemplate";
        case ErrorCode::NoSuggestionsParsed: return "NoSuggestionsParsed";
        case ErrorCode::ModeMismatch: return "ModeMismatch";
        case ErrorCode::UnknownTask: return "UnknownTask";
        case ErrorCode::OrphanRecord: return "OrphanRecord";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

ErrorClass classify(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownTask:
            return ErrorClass::NotFound;
        case ErrorCode::BackendUnavailable:
        case ErrorCode::BackendRefused:
            return ErrorClass::Backend;
        case ErrorCode::Io:
            return ErrorClass::Internal;
        default:
            return ErrorClass::Validation;
    }
}

}  // namespace nqs
