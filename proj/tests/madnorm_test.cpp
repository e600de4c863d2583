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

#include "intrnn/madnorm.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "intrnn/error.hpp"

namespace intrnn {
namespace {

QuantParams random_range(std::mt19937_64& rng, double lo_max, double hi_max, int bits = 8) {
  std::uniform_real_distribution<double> lo(-lo_max, 0.0);
  std::uniform_real_distribution<double> hi(0.05, hi_max);
  return compute_qparams(lo(rng), hi(rng), bits);
}

MadNormQParams random_qparams(std::mt19937_64& rng, std::size_t hidden, int in_bits) {
  MadNormQParams p;
  p.qp_x = random_range(rng, 6.0, 6.0, in_bits);
  p.qp_mu = random_range(rng, 3.0, 3.0);
  p.qp_xhat = random_range(rng, 8.0, 8.0);
  p.qp_d = compute_qparams(0.0, std::uniform_real_distribution<double>(0.1, 6.0)(rng), 8);
  p.qp_y = random_range(rng, 5.0, 5.0);
  p.hidden = hidden;
  return p;
}

std::vector<Code> random_codes(std::mt19937_64& rng, std::size_t n, const QuantParams& qp) {
  std::uniform_int_distribution<Code> d(0, qp.quant_max());
  std::vector<Code> v(n);
  for (auto& c : v) c = d(rng);
  return v;
}

void expect_same(const MadNormCodes& a, const MadNormCodes& b) {
  ASSERT_EQ(a.mu, b.mu);
  ASSERT_EQ(a.xhat, b.xhat);
  ASSERT_EQ(a.d, b.d);
  ASSERT_EQ(a.y, b.y);
  ASSERT_EQ(a.out, b.out);
}

TEST(LayerNormReal, HandExample) {
  const std::vector<double> x = {1.0, 2.0, 3.0};
  const auto y = layernorm_real(x);
  EXPECT_NEAR(y[0], -std::sqrt(1.5), 1e-4);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], std::sqrt(1.5), 1e-4);
}

TEST(LayerNormReal, ConstantAndShiftInvariance) {
  for (double v : layernorm_real(std::vector<double>(5, 3.25))) EXPECT_EQ(v, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> x(16);
  for (auto& v : x) v = n(rng);
  auto shifted = x;
  for (auto& v : shifted) v += 7.5;
  const auto a = layernorm_real(x), b = layernorm_real(shifted);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(MadNormReal, HandExample) {
  const auto y = madnorm_real(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(y[0], -1.5);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 1.5);
}

TEST(MadNormReal, ConstantVectorGivesZeros) {
  for (double v : madnorm_real(std::vector<double>(7, -2.0))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(madnorm_real(std::vector<double>{}), ValidationError);
}

TEST(MadNormReal, ScaleEquivarianceAndZeroMean) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(1.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + trial % 50);
    for (auto& v : x) v = n(rng);
    const auto y = madnorm_real(x);
    EXPECT_NEAR(std::accumulate(y.begin(), y.end(), 0.0) / y.size(), 0.0, 1e-9);
    for (double c : {-3.0, 0.5, 11.0}) {
      auto scaled = x;
      for (auto& v : scaled) v *= c;
      const auto ys = madnorm_real(scaled);
      for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(ys[i], (c > 0 ? 1.0 : -1.0) * y[i], 1e-9);
      }
    }
  }
}

TEST(MadNormReal, RecordsStages) {
  CalibrationObserver obs;
  PrefixedRecorder rec(&obs, "norm");
  madnorm_real(std::vector<double>{1.0, 2.0, 3.0}, &rec);
  ASSERT_NE(obs.find("norm.mu"), nullptr);
  EXPECT_EQ(obs.find("norm.mu")->min, 2.0);
  EXPECT_DOUBLE_EQ(obs.find("norm.d")->max, 2.0 / 3.0);
  EXPECT_EQ(obs.find("norm.y")->min, -1.5);
  EXPECT_EQ(obs.find("norm.xhat")->count, 3u);
}

TEST(MadNormInt, ZeroVectorNormalizesToZeroPoint) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const MadNormQParams p = random_qparams(rng, 32, 8);
    const auto k = MadNormKernel::create(p);
    const std::vector<Code> x(32, p.qp_x.zero_point);
    for (Code c : madnorm_int(x, k)) EXPECT_EQ(c, p.qp_y.zero_point);
  }
}

TEST(MadNormInt, SingleElementIsItsOwnMean) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    MadNormQParams p = random_qparams(rng, 1, 8);
    p.qp_mu = p.qp_x;  // the mean of one element is the element itself
    const auto k = MadNormKernel::create(p);
    const std::vector<Code> x = random_codes(rng, 1, p.qp_x);
    const MadNormCodes c = madnorm_int_codes(x, k);
    EXPECT_EQ(c.mu, x[0]);
    EXPECT_EQ(c.xhat[0], quantize(0.0, p.qp_xhat));
    EXPECT_EQ(c.d, 0);
    EXPECT_EQ(c.y[0], p.qp_y.zero_point);
  }
}

TEST(MadNormInt, QuantizedTensorInterface) {
  std::mt19937_64 rng(5);
  const MadNormQParams p = random_qparams(rng, 8, 8);
  QuantTensor x{{8}, random_codes(rng, 8, p.qp_x), p.qp_x};
  const QuantTensor y = madnorm_int(x, p);
  EXPECT_EQ(y.qp, p.qp_y);
  EXPECT_EQ(y.shape, x.shape);
  EXPECT_NO_THROW(y.validate());
  x.qp = p.qp_mu;
  EXPECT_THROW(madnorm_int(x, p), ValidationError);
}

TEST(MadNormInt, CloseToRealPathWithCalibratedRanges) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.3, 1.5);
  constexpr std::size_t kHidden = 64;
  std::vector<std::vector<double>> batch(64, std::vector<double>(kHidden));
  for (auto& v : batch) {
    for (auto& e : v) e = n(rng);
  }
  QuantParams qp_x = compute_qparams(-6.0, 6.5, 8);
  CalibrationObserver obs;
  PrefixedRecorder rec(&obs, "n");
  for (const auto& v : batch) madnorm_real(dequantize(quantize(v, qp_x), qp_x), &rec);
  const MadNormQParams p = madnorm_qparams_from(obs, "n", qp_x, kHidden);
  const auto k = MadNormKernel::create(p);
  for (const auto& v : batch) {
    const auto q = quantize(v, qp_x);
    const MadNormCodes c = madnorm_int_codes(q, k);
    expect_same(c, madnorm_fakequant_codes(q, k));
    const auto real = madnorm_real(dequantize(q, qp_x));
    for (std::size_t i = 0; i < kHidden; ++i) {
      EXPECT_LE(std::abs(dequantize(c.y[i], p.qp_y) - real[i]), 3 * p.qp_y.scale);
    }
  }
}

TEST(MadNormInt, BitExactAgainstFakeQuantOracle) {
  std::mt19937_64 rng(7);
  int vectors = 0;
  for (std::size_t hidden : {std::size_t{1}, std::size_t{2}, std::size_t{64}, std::size_t{1366}}) {
    for (int trial = 0; trial < 300; ++trial) {
      const MadNormQParams p = random_qparams(rng, hidden, trial % 5 == 0 ? 16 : 8);
      const auto k = MadNormKernel::create(p);
      for (int rep = 0; rep < 4; ++rep) {
        // a narrow band of codes gives small deviations; uniform gives large ones
        std::vector<Code> x = random_codes(rng, hidden, p.qp_x);
        if (rep % 2) {
          const Code center = x[0];
          for (auto& c : x) c = std::clamp<Code>(center + (c % 7) - 3, 0, p.qp_x.quant_max());
        }
        expect_same(madnorm_int_codes(x, k), madnorm_fakequant_codes(x, k));
        ++vectors;
      }
    }
  }
  EXPECT_GE(vectors, 4800);
}

TEST(MadNormInt, AffineStageBitExact) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    MadNormQParams p = random_qparams(rng, 24, 8);
    MadNormAffine a;
    a.qp_gamma = compute_qparams(0.0, 2.0, 8);
    a.qp_beta = random_range(rng, 1.0, 1.0);
    a.qp_out = random_range(rng, 6.0, 6.0);
    a.gamma_q = random_codes(rng, 24, a.qp_gamma);
    a.beta_q = random_codes(rng, 24, a.qp_beta);
    p.affine = a;
    const auto k = MadNormKernel::create(p);
    const auto x = random_codes(rng, 24, p.qp_x);
    const MadNormCodes c = madnorm_int_codes(x, k);
    expect_same(c, madnorm_fakequant_codes(x, k));
    // the affine output agrees with gamma * y + beta within a rounding step
    for (std::size_t i = 0; i < 24; ++i) {
      const double expected = dequantize(a.gamma_q[i], a.qp_gamma) * dequantize(c.y[i], p.qp_y) +
                              dequantize(a.beta_q[i], a.qp_beta);
      const double clipped = std::clamp(expected, a.qp_out.min, a.qp_out.max);
      EXPECT_LE(std::abs(dequantize(c.out[i], a.qp_out) - clipped), a.qp_out.scale);
    }
  }
}

TEST(MadNormQParams, Validation) {
  MadNormQParams p;
  p.qp_x = compute_qparams(-1, 1, 8);
  p.qp_mu = p.qp_xhat = p.qp_y = p.qp_x;
  p.qp_d = compute_qparams(0, 1, 8);
  p.hidden = 4;
  EXPECT_NO_THROW(p.validate());
  p.qp_d = compute_qparams(-1, 1, 8);
  EXPECT_THROW(p.validate(), ValidationError);
  p.qp_d = compute_qparams(0, 1, 16);
  EXPECT_THROW(p.validate(), ValidationError);
  p.qp_d = compute_qparams(0, 1, 8);
  p.hidden = 0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(MadNormStatistics, GaussianMadIsAboutPointEightSigma) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  std::vector<double> x(1000000);
  for (auto& v : x) v = n(rng);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double mad = 0.0, var = 0.0;
  for (double v : x) {
    mad += std::abs(v - mean);
    var += (v - mean) * (v - mean);
  }
  const double ratio = (mad / x.size()) / std::sqrt(var / x.size());
  EXPECT_GE(ratio, 0.788);
  EXPECT_LE(ratio, 0.808);
  EXPECT_NEAR(ratio, std::sqrt(2.0 / M_PI), 0.002);
}

// Population mean and mean absolute deviation of the three test distributions.
struct Distribution {
  const char* name;
  std::function<double(std::mt19937_64&)> sample;
  double mean;
  double mad;
};

std::vector<Distribution> distributions() {
  return {
      {"gaussian", [](std::mt19937_64& r) { return std::normal_distribution<double>()(r); }, 0.0,
       std::sqrt(2.0 / M_PI)},
      {"uniform", [](std::mt19937_64& r) { return std::uniform_real_distribution<double>()(r); },
       0.5, 0.25},
      {"exponential",
       [](std::mt19937_64& r) { return std::exponential_distribution<double>()(r); }, 1.0,
       2.0 / std::exp(1.0)},
  };
}

TEST(MadNormStatistics, ScaleConvergesToPopulationMad) {
  std::mt19937_64 rng(11);
  for (const auto& dist : distributions()) {
    double previous = INFINITY;
    for (std::size_t n : {1000u, 10000u, 100000u, 1000000u}) {
      std::vector<double> errors;
      for (int trial = 0; trial < 5; ++trial) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += std::abs(dist.sample(rng) - dist.mean);
        errors.push_back(std::abs(sum / n - dist.mad));
      }
      std::nth_element(errors.begin(), errors.begin() + 2, errors.end());
      const double median = errors[2];
      EXPECT_LT(median, previous) << dist.name << " n=" << n;
      previous = median;
    }
    EXPECT_LT(previous, 2e-3) << dist.name;
  }
}

TEST(MadNormStatistics, ConcentrationBound) {
  std::mt19937_64 rng(12);
  constexpr std::size_t kSamples = 100000;
  for (const auto& dist : distributions()) {
    std::vector<double> x(kSamples);
    for (auto& v : x) v = dist.sample(rng);
    for (double k : {2.0, 4.0, 8.0}) {
      std::size_t inside = 0;
      for (double v : x) inside += std::abs((v - dist.mean) / dist.mad) < k;
      EXPECT_GE(static_cast<double>(inside) / kSamples, 1.0 - 1.0 / k - 0.01)
          << dist.name << " k=" << k;
    }
  }
}

}  // namespace
}  // namespace intrnn
