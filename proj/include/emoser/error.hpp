#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emoser {

enum class Errc {
  // audio
  MalformedRiff,
  UnsupportedFormat,
  EmptyAudio,
  // features
  NonPowerOfTwoLength,
  ClipTooShort,
  // ravdess
  BadPartCount,
  NonNumericPart,
  CodeOutOfRange,
  NeutralStrongConflict,
  BadExtension,
  RootNotFound,
  BadArchive,
  IoFailure,
  EmptyInput,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  // tensor_nn / models
  ShapeMismatch,
  InvalidRate,
  LabelOutOfRange,
  NonFinite,
  InputTooSmall,
  ShapeMismatchOnLoad,
  // train_eval
  EmptySet,
  NonSquareMatrix,
  DegenerateMarginals,
  // cli / serve
  ConfigParseError,
  InvalidArgument,
  BindFailure,
  CheckpointLoadError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedRiff: return "MalformedRiff";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::EmptyAudio: return "EmptyAudio";
    case Errc::NonPowerOfTwoLength: return "NonPowerOfTwoLength";
    case Errc::ClipTooShort: return "ClipTooShort";
    case Errc::BadPartCount: return "BadPartCount";
    case Errc::NonNumericPart: return "NonNumericPart";
    case Errc::CodeOutOfRange: return "CodeOutOfRange";
    case Errc::NeutralStrongConflict: return "NeutralStrongConflict";
    case Errc::BadExtension: return "BadExtension";
    case Errc::RootNotFound: return "RootNotFound";
    case Errc::BadArchive: return "BadArchive";
    case Errc::IoFailure: return "IoFailure";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InputTooSmall: return "InputTooSmall";
    case Errc::ShapeMismatchOnLoad: return "ShapeMismatchOnLoad";
    case Errc::EmptySet: return "EmptySet";
    case Errc::NonSquareMatrix: return "NonSquareMatrix";
    case Errc::DegenerateMarginals: return "DegenerateMarginals";
    case Errc::ConfigParseError: return "ConfigParseError";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::BindFailure: return "BindFailure";
    case Errc::CheckpointLoadError: return "CheckpointLoadError";
  }
  return "Unknown";
}

/// Every domain failure in the library is raised as this exception; `code()`
/// identifies the failure kind, `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

}  // namespace emoser
