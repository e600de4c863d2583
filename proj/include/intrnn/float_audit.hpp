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

#ifndef INTRNN_FLOAT_AUDIT_HPP_
#define INTRNN_FLOAT_AUDIT_HPP_

#include <cstdint>

// Debug instrumentation that counts floating-point operations executed by
// the library. Every routine that does real arithmetic reports an estimate of
// its operation count; integer kernels never report. Counting is off unless
// the INTRNN_FLOAT_AUDIT environment variable is set to a non-zero value or
// an Audit scope is active.
namespace intrnn::float_audit {

bool enabled();
void record(std::uint64_t ops);
std::uint64_t count();
void reset();

// Enables counting for its lifetime and restores the previous state after.
class Audit {
 public:
  Audit();
  ~Audit();
  Audit(const Audit&) = delete;
  Audit& operator=(const Audit&) = delete;

  std::uint64_t ops() const { return count() - start_; }

 private:
  bool previous_;
  std::uint64_t start_;
};

}  // namespace intrnn::float_audit

#endif  // INTRNN_FLOAT_AUDIT_HPP_
