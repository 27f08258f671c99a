/*
 * Copyright 2026 The TxV Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TXV_ERRORS_H_
#define TXV_ERRORS_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace txv {

// Coarse error categories. The CLI maps them to exit codes 1, 2 and 3.
enum class ErrorCategory { kConfig = 1, kData = 2, kNumerical = 3 };

const char* CategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

#define TXV_DEFINE_ERROR(Name, Category)                 \
  class Name : public Error {                            \
   public:                                               \
    explicit Name(const std::string& message)            \
        : Error(ErrorCategory::Category, message) {}     \
  };

TXV_DEFINE_ERROR(ConfigError, kConfig)
TXV_DEFINE_ERROR(BatchTooSmallError, kConfig)
TXV_DEFINE_ERROR(DimensionError, kData)
TXV_DEFINE_ERROR(EmptyInputError, kData)
TXV_DEFINE_ERROR(MissingItemError, kData)
TXV_DEFINE_ERROR(InvalidBatchError, kData)
TXV_DEFINE_ERROR(FusionError, kData)
TXV_DEFINE_ERROR(EvalError, kData)
TXV_DEFINE_ERROR(IoError, kData)
TXV_DEFINE_ERROR(DataError, kData)
TXV_DEFINE_ERROR(NumericalError, kNumerical)

#undef TXV_DEFINE_ERROR

// Malformed binary or text file. `offset` is the byte offset (or line number
// for text formats) where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : Error(ErrorCategory::kData,
              message + " (at offset " + std::to_string(offset) + ")"),
        message_(message),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }
  const std::string& message() const { return message_; }

  FormatError WithContext(const std::string& context) const {
    return FormatError(context + ": " + message_, offset_);
  }

 private:
  std::string message_;
  std::uint64_t offset_;
};

}  // namespace txv

#endif  // TXV_ERRORS_H_
