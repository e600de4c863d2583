/* Copyright 2026 The intrnn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef INTRNN_ERROR_HPP_
#define INTRNN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace intrnn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, missing, truncated or corrupted files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Inputs that violate a documented precondition or invariant: bad shapes,
// degenerate calibration ranges, mismatched quantization parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace intrnn

#endif  // INTRNN_ERROR_HPP_
