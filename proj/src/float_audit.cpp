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

#include "intrnn/float_audit.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace intrnn::float_audit {
namespace {

bool env_enabled() {
  const char* v = std::getenv("INTRNN_FLOAT_AUDIT");
  if (v == nullptr) return false;
  std::string_view s(v);
  return !s.empty() && s != "0";
}

std::atomic<bool> g_enabled{env_enabled()};
std::atomic<std::uint64_t> g_count{0};

}  // namespace

bool enabled() { return g_enabled.load(std::memory_order_relaxed); }

void record(std::uint64_t ops) {
  if (g_enabled.load(std::memory_order_relaxed)) {
    g_count.fetch_add(ops, std::memory_order_relaxed);
  }
}

std::uint64_t count() { return g_count.load(std::memory_order_relaxed); }

void reset() { g_count.store(0, std::memory_order_relaxed); }

Audit::Audit() : previous_(enabled()), start_(count()) {
  g_enabled.store(true, std::memory_order_relaxed);
}

Audit::~Audit() { g_enabled.store(previous_, std::memory_order_relaxed); }

}  // namespace intrnn::float_audit
