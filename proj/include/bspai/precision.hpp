#pragma once

// Software-simulated floating-point formats. Values live in hardware doubles
// (or DoubleDouble for the quad surrogate); every operation "in precision u"
// is computed natively and then rounded to the target format with
// round-to-nearest-even, in the style of operation-level chopping.

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

#include "bspai/double_double.hpp"
#include "bspai/error.hpp"

namespace bspai {

enum class FormatKind { half, single, dbl, quad, drop };

struct FpFormat {
  std::string_view name;
  FormatKind kind;
  int bits;            // storage width; 0 for the drop pseudo-format
  int digits;          // significand bits including the implicit bit
  int emin;            // exponent of the smallest normal number
  double unit_roundoff;
  double max_finite;
  double min_normal;

  friend constexpr bool operator==(const FpFormat& a, const FpFormat& b) { return a.kind == b.kind; }
};

inline constexpr FpFormat kHalf{"half", FormatKind::half, 16, 11, -14, 0x1p-11, 65504.0, 0x1p-14};
inline constexpr FpFormat kSingle{"single", FormatKind::single, 32, 24, -126, 0x1p-24, FLT_MAX, FLT_MIN};
inline constexpr FpFormat kDouble{"double", FormatKind::dbl, 64, 53, -1022, 0x1p-53, DBL_MAX, DBL_MIN};
// Double-double surrogate for quad. Its range is that of double, narrowed at
// the bottom by the 53 extra bits carried in the low word.
inline constexpr FpFormat kQuad{"quad", FormatKind::quad, 128, 106, -969, 0x1p-104, DBL_MAX, 0x1p-969};
// Discarded elements: everything rounds to zero, and for bucketing purposes
// the unit roundoff is 1.
inline constexpr FpFormat kDrop{"drop", FormatKind::drop, 0, 0, 0, 1.0, 0.0, 0.0};

inline const FpFormat& format_from_name(std::string_view name) {
  for (const FpFormat* f : {&kHalf, &kSingle, &kDouble, &kQuad, &kDrop}) {
    if (f->name == name) return *f;
  }
  throw Error("unknown floating-point format '" + std::string(name) + "'");
}

constexpr double unit_roundoff(const FpFormat& fmt) { return fmt.unit_roundoff; }

namespace detail {

// Round |x| to a binary grid with `digits` significand bits and minimum
// normal exponent `emin` (gradual underflow below it).
inline double round_to_grid(double x, int digits, int emin, double max_finite) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const double ax = std::fabs(x);
  const int e = std::max(std::ilogb(ax), emin);
  const double ulp = std::ldexp(1.0, e - (digits - 1));
  // ax / ulp is exact: ulp is a power of two and the quotient stays normal.
  double r = std::nearbyint(ax / ulp) * ulp;
  if (r > max_finite) r = std::numeric_limits<double>::infinity();
  return std::copysign(r, x);
}

}  // namespace detail

/// Nearest value of `fmt` to x (round-to-nearest-even). Overflow gives +-inf;
/// the drop format maps everything to zero.
inline double round_to(double x, const FpFormat& fmt) {
  switch (fmt.kind) {
    case FormatKind::dbl:
    case FormatKind::quad:
      return x;
    case FormatKind::single: {
      const double ax = std::fabs(x);
      if (ax >= FLT_MIN && ax <= FLT_MAX) return static_cast<double>(static_cast<float>(x));
      return detail::round_to_grid(x, fmt.digits, fmt.emin, fmt.max_finite);
    }
    case FormatKind::half:
      return detail::round_to_grid(x, fmt.digits, fmt.emin, fmt.max_finite);
    case FormatKind::drop:
      return 0.0;
  }
  return x;
}

/// Rounds a double-double value to `fmt`. For formats narrower than double
/// the low word only matters when the high word sits exactly on a midpoint.
inline DoubleDouble round_to(const DoubleDouble& x, const FpFormat& fmt) {
  switch (fmt.kind) {
    case FormatKind::quad:
      return x;
    case FormatKind::dbl:
      return DoubleDouble(x.hi + x.lo);
    case FormatKind::drop:
      return DoubleDouble(0.0);
    default:
      break;
  }
  const double r = round_to(x.hi, fmt);
  if (x.lo == 0.0 || r == x.hi || !std::isfinite(r)) return DoubleDouble(r);
  const double other = r + 2.0 * (x.hi - r);
  if (std::fabs(x.hi - r) == std::fabs(other - x.hi) && ((x.lo > 0.0) == (other > r))) {
    return DoubleDouble(round_to(other, fmt));
  }
  return DoubleDouble(r);
}

/// IEEE binary16 bit pattern of a value already representable in half.
inline std::uint16_t half_bits(double x) {
  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  const double ax = std::fabs(x);
  if (std::isnan(x)) return 0x7e00u;
  if (std::isinf(x)) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (ax == 0.0) return sign;
  if (ax < kHalf.min_normal) {
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(std::ldexp(ax, 24)));
  }
  const int e = std::ilogb(ax);
  const auto frac = static_cast<std::uint16_t>(std::ldexp(ax, 10 - e) - 1024.0);
  return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>((e + 15) << 10) | frac);
}

inline double half_from_bits(std::uint16_t h) {
  const double sign = (h & 0x8000u) ? -1.0 : 1.0;
  const int e = (h >> 10) & 0x1f;
  const int frac = h & 0x3ff;
  if (e == 0x1f) return frac ? std::numeric_limits<double>::quiet_NaN() : sign * std::numeric_limits<double>::infinity();
  if (e == 0) return sign * std::ldexp(static_cast<double>(frac), -24);
  return sign * std::ldexp(static_cast<double>(1024 + frac), e - 25);
}

enum class ArithOp { add, sub, mul, div };

namespace detail {

template <class T>
T apply(T a, T b, ArithOp kind) {
  switch (kind) {
    case ArithOp::add: return a + b;
    case ArithOp::sub: return a - b;
    case ArithOp::mul: return a * b;
    case ArithOp::div: return a / b;
  }
  return a;
}

}  // namespace detail

/// a (kind) b computed in hardware double and rounded to `fmt`. With the quad
/// surrogate the double overload returns the nearest double to the exact
/// result; use the DoubleDouble overload to keep the extra bits.
inline double op_in(double a, double b, ArithOp kind, const FpFormat& fmt) {
  const double r = detail::apply(a, b, kind);
  if (fmt.kind == FormatKind::dbl || fmt.kind == FormatKind::quad) return r;
  return round_to(r, fmt);
}

inline DoubleDouble op_in(const DoubleDouble& a, const DoubleDouble& b, ArithOp kind, const FpFormat& fmt) {
  if (fmt.kind == FormatKind::quad) return detail::apply(a, b, kind);
  if (fmt.kind == FormatKind::drop) return DoubleDouble(0.0);
  return DoubleDouble(op_in(a.hi + a.lo, b.hi + b.lo, kind, fmt));
}

/// Fused a*b + c, one rounding.
inline double fma_in(double a, double b, double c, const FpFormat& fmt) {
  return round_to(std::fma(a, b, c), fmt);
}

inline double sqrt_in(double a, const FpFormat& fmt) { return round_to(std::sqrt(a), fmt); }

/// Bundles a format with the scalar operations kernels need, so inner loops
/// read as arithmetic rather than op_in calls.
class Arith {
public:
  constexpr explicit Arith(const FpFormat& fmt) : fmt_(fmt) {}

  const FpFormat& format() const { return fmt_; }
  double round(double x) const { return round_to(x, fmt_); }
  double add(double a, double b) const { return op_in(a, b, ArithOp::add, fmt_); }
  double sub(double a, double b) const { return op_in(a, b, ArithOp::sub, fmt_); }
  double mul(double a, double b) const { return op_in(a, b, ArithOp::mul, fmt_); }
  double div(double a, double b) const { return op_in(a, b, ArithOp::div, fmt_); }
  double sqrt(double a) const { return sqrt_in(a, fmt_); }

private:
  FpFormat fmt_;
};

}  // namespace bspai
