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

#ifndef INTRNN_SERIALIZE_HPP_
#define INTRNN_SERIALIZE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>

#include "intrnn/calibration.hpp"
#include "intrnn/model.hpp"

namespace intrnn {

inline constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// Path of the tensor blob that accompanies a manifest: the manifest path with
// its extension replaced by ".bin".
std::filesystem::path blob_path(const std::filesystem::path& manifest);

// Integer model: JSON manifest at `manifest` plus the blob next to it.
// load_model throws IoError for missing, unparsable, truncated or
// checksum-failing files and ValidationError for version mismatches, dangling
// references and inconsistent quantization parameters.
void save_model(const IntModel& model, const std::filesystem::path& manifest);
IntModel load_model(const std::filesystem::path& manifest);

// Floating-point model, same container with f64 tensors.
void save_float_model(const FloatModel& model, const std::filesystem::path& manifest);
FloatModel load_float_model(const std::filesystem::path& manifest);

// Observed per-stage ranges as a single JSON document.
void save_calibration(const CalibrationObserver& observer, const std::filesystem::path& path);
CalibrationObserver load_calibration(const std::filesystem::path& path);

}  // namespace intrnn

#endif  // INTRNN_SERIALIZE_HPP_
