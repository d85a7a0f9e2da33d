#pragma once

#include <stdexcept>
#include <string>

namespace branchforge {

// Base class for all library errors. `code()` is the stable machine-readable
// error class surfaced by the CLI as a single line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

#define BRANCHFORGE_ERROR(Name)                  \
  class Name : public Error {                    \
   public:                                       \
    explicit Name(const std::string& message)    \
        : Error(#Name, message) {}               \
  };

BRANCHFORGE_ERROR(LexError)
BRANCHFORGE_ERROR(ParseError)
BRANCHFORGE_ERROR(LineOutOfRange)
BRANCHFORGE_ERROR(EmptyTrace)
BRANCHFORGE_ERROR(GenerationExhausted)
BRANCHFORGE_ERROR(ShapeMismatch)
BRANCHFORGE_ERROR(CheckFailed)
BRANCHFORGE_ERROR(MaskUnavailable)
BRANCHFORGE_ERROR(SlotMismatch)
BRANCHFORGE_ERROR(UnknownToken)
BRANCHFORGE_ERROR(SequenceTooLong)
BRANCHFORGE_ERROR(NonFiniteLoss)
BRANCHFORGE_ERROR(EmptyDataset)
BRANCHFORGE_ERROR(MissingBranchSet)
BRANCHFORGE_ERROR(CheckpointNotFound)
BRANCHFORGE_ERROR(IoError)
BRANCHFORGE_ERROR(ConfigError)

#undef BRANCHFORGE_ERROR

}  // namespace branchforge
