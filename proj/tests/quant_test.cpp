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

#include "intrnn/quant.hpp"

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <random>

#include "intrnn/error.hpp"

namespace intrnn {
namespace {

using boost::multiprecision::cpp_bin_float_100;
using boost::multiprecision::cpp_int;

// Exact round-half-away-from-zero of num / 2^shift on arbitrary precision
// integers.
cpp_int exact_shift_round(const cpp_int& num, int shift) {
  const cpp_int den = cpp_int(1) << shift;
  const cpp_int magnitude = abs(num);
  cpp_int q = (2 * magnitude + den) / (2 * den);
  return num < 0 ? cpp_int(-q) : q;
}

Code exact_requantize(std::int64_t acc, const FixedPointMultiplier& m, std::int32_t zp,
                      int bits) {
  cpp_int r = exact_shift_round(cpp_int(acc) * m.mantissa, 31 + m.right_shift) + zp;
  const cpp_int hi = (cpp_int(1) << bits) - 1;
  if (r < 0) r = 0;
  if (r > hi) r = hi;
  return static_cast<Code>(r);
}

TEST(ComputeQParams, UnitScale) {
  const QuantParams qp = compute_qparams(0.0, 255.0, 8);
  EXPECT_EQ(qp.scale, 1.0);
  EXPECT_EQ(qp.zero_point, 0);
}

TEST(ComputeQParams, SymmetricRangeRoundsTieAwayFromZero) {
  const QuantParams qp = compute_qparams(-1.0, 1.0, 8);
  EXPECT_DOUBLE_EQ(qp.scale, 2.0 / 255.0);
  // -min / scale = 127.5 exactly; half away from zero gives 128.
  const cpp_bin_float_100 exact = cpp_bin_float_100(1) / (cpp_bin_float_100(2) / 255);
  EXPECT_EQ(exact, cpp_bin_float_100("127.5"));
  EXPECT_EQ(qp.zero_point, 128);
}

TEST(ComputeQParams, ZeroInclusionClampsMin) {
  const QuantParams qp = compute_qparams(0.5, 2.0, 8);
  EXPECT_EQ(qp.min, 0.0);
  EXPECT_DOUBLE_EQ(qp.scale, 2.0 / 255.0);
  EXPECT_EQ(qp.zero_point, 0);
}

TEST(ComputeQParams, RejectsDegenerateAndBadInputs) {
  EXPECT_THROW(compute_qparams(0.0, 0.0, 8), ValidationError);
  EXPECT_THROW(compute_qparams(-1.0, 1.0, 4), ValidationError);
  EXPECT_THROW(compute_qparams(1.0, -1.0, 8), ValidationError);
  EXPECT_THROW(compute_qparams(-INFINITY, 1.0, 8), ValidationError);
}

TEST(ComputeQParams, InvariantsHoldOnRandomRanges) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 2000; ++trial) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const int bits = trial % 2 ? 16 : 8;
    const QuantParams qp = compute_qparams(a, b, bits);
    EXPECT_LE(qp.min, 0.0);
    EXPECT_GE(qp.max, 0.0);
    EXPECT_DOUBLE_EQ(qp.scale, (qp.max - qp.min) / ((1 << bits) - 1));
    EXPECT_GE(qp.zero_point, 0);
    EXPECT_LE(qp.zero_point, qp.quant_max());
    EXPECT_EQ(dequantize(qp.zero_point, qp), 0.0);
  }
}

TEST(Quantize, Examples) {
  const QuantParams qp = compute_qparams(-1.0, 1.0, 8);
  EXPECT_EQ(quantize(0.0, qp), qp.zero_point);
  // 0.5 * 255 / 2 = 63.75 -> 64, plus 128.
  EXPECT_EQ(quantize(0.5, qp), 192);
  EXPECT_EQ(quantize(10.0, qp), 255);
  EXPECT_EQ(quantize(-10.0, qp), 0);
}

TEST(Dequantize, Examples) {
  const QuantParams qp = compute_qparams(-1.0, 1.0, 8);
  EXPECT_EQ(dequantize(qp.zero_point, qp), 0.0);
  EXPECT_NEAR(dequantize(255, qp), 127.0 * 2.0 / 255.0, 1e-15);
  EXPECT_NEAR(dequantize(255, qp), 0.99608, 1e-5);
}

TEST(Quantize, RoundTripWithinHalfStep) {
  std::mt19937_64 rng(11);
  const QuantParams qp = compute_qparams(-3.0, 5.0, 8);
  std::uniform_real_distribution<double> u(qp.min, qp.max);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_LE(std::abs(fake_quantize(x, qp) - x), qp.scale / 2 + 1e-12);
  }
}

TEST(Quantize, GridRoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 40; ++trial) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const QuantParams qp = compute_qparams(a, b, trial % 4 == 0 ? 16 : 8);
    for (Code q = 0; q <= qp.quant_max(); ++q) {
      ASSERT_EQ(quantize(dequantize(q, qp), qp), q) << "range [" << a << ", " << b << "]";
    }
  }
}

TEST(FixedPointMultiplier, Half) {
  const auto m = FixedPointMultiplier::from_real(0.5);
  EXPECT_EQ(m.mantissa, 1 << 30);
  EXPECT_EQ(m.right_shift, 0);
  EXPECT_EQ(m.represented(), 0.5L);
}

TEST(FixedPointMultiplier, OneOver255WithinRelativeBound) {
  const auto m = FixedPointMultiplier::from_real(1.0 / 255.0);
  const cpp_bin_float_100 represented =
      cpp_bin_float_100(m.mantissa) / pow(cpp_bin_float_100(2), 31 + m.right_shift);
  const cpp_bin_float_100 target = cpp_bin_float_100(1) / 255;
  EXPECT_LE(abs(represented - target) / target, pow(cpp_bin_float_100(2), -30));
  EXPECT_GE(m.mantissa, 1 << 30);
}

TEST(FixedPointMultiplier, ZeroAndErrors) {
  const auto zero = FixedPointMultiplier::from_real(0.0);
  EXPECT_EQ(zero.mantissa, 0);
  EXPECT_THROW(FixedPointMultiplier::from_real(-0.1), ValidationError);
  EXPECT_THROW(FixedPointMultiplier::from_real(1.0), ValidationError);
  EXPECT_THROW(FixedPointMultiplier::from_real(NAN), ValidationError);
}

TEST(FixedPointMultiplier, NormalizedWithBoundedErrorOnRandomReals) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mant(0.0, 1.0);
  std::uniform_int_distribution<int> exp(-40, 0);
  for (int i = 0; i < 100000; ++i) {
    const double r = std::ldexp(mant(rng), exp(rng));
    if (r == 0.0 || r >= 1.0) continue;
    const auto m = FixedPointMultiplier::from_real(r);
    ASSERT_GE(m.mantissa, 1 << 30);
    ASSERT_GE(m.right_shift, 0);
    const long double rel = std::abs(m.represented() - r) / r;
    ASSERT_LE(rel, std::ldexp(1.0L, -30));
  }
}

TEST(Requantize, Examples) {
  const auto half = FixedPointMultiplier::from_real(0.5);
  EXPECT_EQ(requantize(0, half, 77, 8), 77);
  EXPECT_EQ(requantize(1000, half, 0, 8), 255);
  const auto m = FixedPointMultiplier::from_real(2.0 / 255.0);
  // round(100 * 2 / 255) + 128 = round(0.784...) + 128 = 129
  EXPECT_EQ(exact_requantize(100, m, 128, 8), 129);
  EXPECT_EQ(requantize(100, m, 128, 8), 129);
}

TEST(Requantize, BitExactAgainstArbitraryPrecisionOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int32_t> acc_dist(std::numeric_limits<std::int32_t>::min(),
                                                       std::numeric_limits<std::int32_t>::max());
  std::uniform_int_distribution<std::int32_t> small_acc(-70000, 70000);
  std::uniform_real_distribution<double> mant(0.5, 1.0);
  std::uniform_int_distribution<int> exp(-24, 0);
  std::uniform_int_distribution<int> zp8(0, 255);
  for (int i = 0; i < 1000000; ++i) {
    const auto m = FixedPointMultiplier::from_real(std::ldexp(mant(rng), exp(rng)) * 0.999);
    const std::int32_t acc = i % 2 ? acc_dist(rng) : small_acc(rng);
    const int bits = i % 3 == 0 ? 16 : 8;
    const std::int32_t zp = bits == 8 ? zp8(rng) : zp8(rng) * 256;
    ASSERT_EQ(requantize(acc, m, zp, bits), exact_requantize(acc, m, zp, bits))
        << "acc=" << acc << " mantissa=" << m.mantissa << " shift=" << m.right_shift;
  }
}

TEST(Requantize, TiesRoundAwayFromZero) {
  const auto half = FixedPointMultiplier::from_real(0.5);
  EXPECT_EQ(requantize(1, half, 100, 8), 101);   // 0.5 -> 1
  EXPECT_EQ(requantize(-1, half, 100, 8), 99);   // -0.5 -> -1
  EXPECT_EQ(requantize(3, half, 100, 8), 102);   // 1.5 -> 2
  EXPECT_EQ(requantize(-3, half, 100, 8), 98);   // -1.5 -> -2
}

TEST(Requantize, MonotoneInAccumulator) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> r(1e-6, 0.999);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = FixedPointMultiplier::from_real(r(rng));
    Code previous = requantize(-200000, m, 128, 8);
    for (std::int32_t acc = -200000; acc <= 200000; acc += 37) {
      const Code q = requantize(acc, m, 128, 8);
      ASSERT_GE(q, previous);
      previous = q;
    }
  }
}

TEST(Requantizer, LargeMultipliersUsePreShift) {
  const QuantParams out = compute_qparams(-100.0, 100.0, 16);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> r(0.001, 3000.0);
  std::uniform_int_distribution<std::int32_t> acc(-5000, 5000);
  for (int i = 0; i < 20000; ++i) {
    const double real = r(rng);
    const Requantizer rq = Requantizer::create(real, out);
    EXPECT_LE(std::abs(rq.represented() - real) / real, std::ldexp(1.0L, -30));
    const std::int32_t a = acc(rng);
    // exact: a * mantissa * 2^(pre_shift - 31 - right_shift)
    const int shift = 31 + rq.multiplier.right_shift - rq.pre_shift;
    cpp_int v = exact_shift_round(cpp_int(a) * rq.multiplier.mantissa, shift) + out.zero_point;
    v = v < 0 ? cpp_int(0) : (v > 65535 ? cpp_int(65535) : v);
    ASSERT_EQ(rq(a), static_cast<Code>(v));
  }
  EXPECT_THROW(Requantizer::create(-1.0, out), ValidationError);
}

TEST(LinearRequantizer, MatchesExactSumOfDecodedCoefficients) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ratio(-4.0, 4.0);
  std::uniform_real_distribution<double> offset(-300.0, 300.0);
  std::uniform_int_distribution<std::int64_t> term(-65535, 65535);
  const QuantParams out = compute_qparams(-3.0, 7.0, 16);
  for (int i = 0; i < 20000; ++i) {
    const double ratios[3] = {ratio(rng), ratio(rng) * 1e-3, ratio(rng)};
    const auto lr = LinearRequantizer::create(ratios, i % 2 ? offset(rng) : 0.0, out);
    const std::int64_t terms[3] = {term(rng), term(rng), term(rng)};
    cpp_int num = lr.offset;
    for (int j = 0; j < 3; ++j) num += cpp_int(lr.coefficients[j]) * terms[j];
    cpp_int v = exact_shift_round(num, lr.shift) + out.zero_point;
    v = v < 0 ? cpp_int(0) : (v > 65535 ? cpp_int(65535) : v);
    ASSERT_EQ(lr.apply(terms), static_cast<Code>(v));
    for (int j = 0; j < 3; ++j) {
      ASSERT_NEAR(static_cast<double>(lr.coefficient(j)), ratios[j], std::ldexp(1.0, -29));
    }
  }
}

TEST(RoundingDivide, TiesAwayFromZero) {
  EXPECT_EQ(rounding_divide(5, 2), 3);
  EXPECT_EQ(rounding_divide(-5, 2), -3);
  EXPECT_EQ(rounding_divide(4, 3), 1);
  EXPECT_EQ(rounding_divide(-4, 3), -1);
  EXPECT_EQ(rounding_divide(0, 7), 0);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> num(-1000000000, 1000000000);
  std::uniform_int_distribution<std::int64_t> den(1, 100000);
  for (int i = 0; i < 100000; ++i) {
    const std::int64_t n = num(rng), d = den(rng);
    const cpp_int m = abs(cpp_int(n));
    cpp_int q = (2 * m + d) / (2 * cpp_int(d));
    if (n < 0) q = -q;
    ASSERT_EQ(rounding_divide(n, d), static_cast<std::int64_t>(q));
  }
}

TEST(QuantTensor, Validate) {
  QuantTensor t{{2, 3}, {0, 1, 2, 3, 4, 255}, compute_qparams(-1, 1, 8)};
  EXPECT_NO_THROW(t.validate());
  t.data.back() = 256;
  EXPECT_THROW(t.validate(), ValidationError);
  t.data.pop_back();
  EXPECT_THROW(t.validate(), ValidationError);
}

}  // namespace
}  // namespace intrnn
