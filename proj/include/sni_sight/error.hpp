#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sni_sight {

enum class ErrorCode {
    // pcap_io
    BadMagic,
    UnsupportedLinkType,
    TruncatedHeader,
    TruncatedRecord,
    MalformedLayer,
    Io,
    // tls_sni
    Malformed,
    BadTraceFile,
    // corpus
    UniverseTooSmall,
    CountTooLarge,
    EmptyCorpus,
    EmptyTrace,
    StartBeyondTrace,
    UnknownSite,
    BadFraction,
    // nn
    ShapeMismatch,
    NonFiniteValue,
    BadRate,
    VersionMismatch,
    CorruptTensor,
    // pipeline
    EmptyTrainSet,
    EmptySet,
    VocabularyMismatch,
    LengthMismatch,
    TooFewPairs,
    // config / cli
    BadConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the toolkit carries one of the codes above; the
/// message holds the human-readable context (offsets, field names, paths).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace sni_sight
