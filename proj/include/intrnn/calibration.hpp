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

#ifndef INTRNN_CALIBRATION_HPP_
#define INTRNN_CALIBRATION_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "intrnn/quant.hpp"

namespace intrnn {

// Running min/max of every value seen at one stage.
struct RangeObserver {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::uint64_t count = 0;

  void observe(std::span<const double> values);
  void observe(double value) { observe(std::span<const double>(&value, 1)); }
  bool observed() const { return count > 0; }
};

// Sink for intermediate values of the real-arithmetic reference paths.
class StageRecorder {
 public:
  virtual ~StageRecorder() = default;
  virtual void record(std::string_view stage, std::span<const double> values) = 0;
  void record(std::string_view stage, double value) {
    record(stage, std::span<const double>(&value, 1));
  }
};

// Forwards to another recorder with "<prefix>." prepended to stage names.
class PrefixedRecorder : public StageRecorder {
 public:
  PrefixedRecorder(StageRecorder* inner, std::string prefix)
      : inner_(inner), prefix_(std::move(prefix)) {}
  void record(std::string_view stage, std::span<const double> values) override;
  using StageRecorder::record;

 private:
  StageRecorder* inner_;
  std::string prefix_;
};

// Records a value only when the recorder is non-null.
inline void record_stage(StageRecorder* r, std::string_view stage, std::span<const double> v) {
  if (r != nullptr) r->record(stage, v);
}
inline void record_stage(StageRecorder* r, std::string_view stage, double v) {
  if (r != nullptr) r->record(stage, v);
}

// Per-stage running min/max, keyed by stage name.
class CalibrationObserver : public StageRecorder {
 public:
  void record(std::string_view stage, std::span<const double> values) override;
  using StageRecorder::record;

  const RangeObserver* find(std::string_view stage) const;
  const std::map<std::string, RangeObserver, std::less<>>& stages() const { return stages_; }

  // compute_qparams over the observed range. Throws ValidationError naming
  // the stage when it was never observed or its range is degenerate.
  QuantParams qparams(std::string_view stage, int bitwidth) const;

  void merge(const CalibrationObserver& other);
  // Replaces the range of one stage (used when reading saved ranges).
  void set(std::string_view stage, const RangeObserver& range);

 private:
  std::map<std::string, RangeObserver, std::less<>> stages_;
};

}  // namespace intrnn

#endif  // INTRNN_CALIBRATION_HPP_
