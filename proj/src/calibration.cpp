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

#include "intrnn/calibration.hpp"

#include <algorithm>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {

void RangeObserver::observe(std::span<const double> values) {
  float_audit::record(2 * values.size());
  for (double v : values) {
    min = std::min(min, v);
    max = std::max(max, v);
  }
  count += values.size();
}

void PrefixedRecorder::record(std::string_view stage, std::span<const double> values) {
  if (inner_ == nullptr) return;
  std::string name = prefix_;
  name += '.';
  name += stage;
  inner_->record(name, values);
}

void CalibrationObserver::record(std::string_view stage, std::span<const double> values) {
  auto it = stages_.find(stage);
  if (it == stages_.end()) it = stages_.emplace(std::string(stage), RangeObserver{}).first;
  it->second.observe(values);
}

const RangeObserver* CalibrationObserver::find(std::string_view stage) const {
  const auto it = stages_.find(stage);
  return it == stages_.end() ? nullptr : &it->second;
}

QuantParams CalibrationObserver::qparams(std::string_view stage, int bitwidth) const {
  const RangeObserver* r = find(stage);
  if (r == nullptr || !r->observed()) {
    throw ValidationError("calibration stage never observed: " + std::string(stage));
  }
  try {
    return compute_qparams(r->min, r->max, bitwidth);
  } catch (const ValidationError& e) {
    throw ValidationError("calibration stage '" + std::string(stage) + "': " + e.what());
  }
}

void CalibrationObserver::merge(const CalibrationObserver& other) {
  for (const auto& [name, r] : other.stages_) {
    auto& mine = stages_[name];
    mine.min = std::min(mine.min, r.min);
    mine.max = std::max(mine.max, r.max);
    mine.count += r.count;
  }
}

void CalibrationObserver::set(std::string_view stage, const RangeObserver& range) {
  stages_.insert_or_assign(std::string(stage), range);
}

}  // namespace intrnn
