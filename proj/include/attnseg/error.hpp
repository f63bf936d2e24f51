// Copyright 2026 The attnseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ATTNSEG_ERROR_HPP_
#define ATTNSEG_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace attnseg {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kShapeMismatch,
  kNonFiniteValue,
  kInvalidValue,
  kSchema,
  kNormalization,
  kInternal,
};

const char* ErrorCodeName(ErrorCode code);

// Base class for every error the library raises. The message always names
// the offending file, byte offset, or index when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define ATTNSEG_DEFINE_ERROR(Name, Code)                         \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message)                    \
        : Error(ErrorCode::Code, message) {}                     \
  };

ATTNSEG_DEFINE_ERROR(InvalidArgumentError, kInvalidArgument)
ATTNSEG_DEFINE_ERROR(IoError, kIo)
ATTNSEG_DEFINE_ERROR(BadMagicError, kBadMagic)
ATTNSEG_DEFINE_ERROR(UnsupportedVersionError, kUnsupportedVersion)
ATTNSEG_DEFINE_ERROR(ShapeMismatchError, kShapeMismatch)
ATTNSEG_DEFINE_ERROR(NonFiniteValueError, kNonFiniteValue)
ATTNSEG_DEFINE_ERROR(InvalidValueError, kInvalidValue)
ATTNSEG_DEFINE_ERROR(SchemaError, kSchema)
ATTNSEG_DEFINE_ERROR(NormalizationError, kNormalization)
ATTNSEG_DEFINE_ERROR(InternalError, kInternal)

#undef ATTNSEG_DEFINE_ERROR

}  // namespace attnseg

#endif  // ATTNSEG_ERROR_HPP_
