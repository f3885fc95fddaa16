#include "sni_sight/error.hpp"

namespace sni_sight {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedLinkType: return "UnsupportedLinkType";
        case ErrorCode::TruncatedHeader: return "TruncatedHeader";
        case ErrorCode::TruncatedRecord: return "TruncatedRecord";
        case ErrorCode::MalformedLayer: return "MalformedLayer";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Malformed: return "Malformed";
        case ErrorCode::BadTraceFile: return "BadTraceFile";
        case ErrorCode::UniverseTooSmall: return "UniverseTooSmall";
        case ErrorCode::CountTooLarge: return "CountTooLarge";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::EmptyTrace: return "EmptyTrace";
        case ErrorCode::StartBeyondTrace: return "StartBeyondTrace";
        case ErrorCode::UnknownSite: return "UnknownSite";
        case ErrorCode::BadFraction: return "BadFraction";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::BadRate: return "BadRate";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::CorruptTensor: return "CorruptTensor";
        case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewPairs: return "TooFewPairs";
        case ErrorCode::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

}  // namespace sni_sight
