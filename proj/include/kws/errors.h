// Copyright 2026 The kws-tcanet Authors. All Rights Reserved.
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

#ifndef KWS_ERRORS_H_
#define KWS_ERRORS_H_

#include <sstream>
#include <stdexcept>
#include <string>

namespace kws {

// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape, range, mode).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Stored bytes do not match their checksum or index.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace internal {

template <typename E, typename... Args>
[[noreturn]] void Throw(const char* file, int line, const Args&... args) {
  std::ostringstream os;
  os << file << ":" << line << ": ";
  (os << ... << args);
  throw E(os.str());
}

}  // namespace internal
}  // namespace kws

#define KWS_FAIL(ErrorType, ...) \
  ::kws::internal::Throw<ErrorType>(__FILE__, __LINE__, __VA_ARGS__)

#define KWS_CHECK(cond, ...)                                          \
  do {                                                                \
    if (!(cond)) {                                                    \
      ::kws::internal::Throw<::kws::ContractViolation>(               \
          __FILE__, __LINE__, "check failed: " #cond ": ", __VA_ARGS__); \
    }                                                                 \
  } while (0)

#endif  // KWS_ERRORS_H_
