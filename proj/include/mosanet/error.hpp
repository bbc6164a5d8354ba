// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mosanet {

/// Broad failure class, used by the CLI to choose an exit code.
enum class ErrorCategory { kConfig, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define MOSANET_DEFINE_ERROR(Name, Category)                    \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what)                      \
        : Error(ErrorCategory::Category, what) {}               \
  }

// Configuration and argument problems.
MOSANET_DEFINE_ERROR(ConfigError, kConfig);
MOSANET_DEFINE_ERROR(ArgumentError, kConfig);
MOSANET_DEFINE_ERROR(CheckpointError, kConfig);

// Problems with the data being processed.
MOSANET_DEFINE_ERROR(ParseError, kData);
MOSANET_DEFINE_ERROR(ValidationError, kData);
MOSANET_DEFINE_ERROR(IoError, kData);
MOSANET_DEFINE_ERROR(InputTooShortError, kData);
MOSANET_DEFINE_ERROR(BackendError, kData);
MOSANET_DEFINE_ERROR(AlignmentError, kData);
MOSANET_DEFINE_ERROR(CompletenessError, kData);
MOSANET_DEFINE_ERROR(UndefinedCorrelationError, kData);

// Non-finite values inside the model or the optimizer.
MOSANET_DEFINE_ERROR(NumericError, kNumeric);

#undef MOSANET_DEFINE_ERROR

}  // namespace mosanet
