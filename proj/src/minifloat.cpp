#include "lightnorm/minifloat.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <string>

#include "lightnorm/error.hpp"

namespace lightnorm {

namespace {

// Guard, round and sticky bits carried below the significand during
// alignment.
constexpr int kExtraBits = 3;

// Rounds a positive normal double with exponent >= emin to m mantissa bits
// directly on its IEEE encoding. At an exact midpoint the sign of `tail`
// (the part of the true value below `ax`) decides; a zero tail rounds to
// even. Saturation is left to the caller.
double round_bits(double ax, int m, double tail) {
  if (m >= 52) return ax;
  const int drop = 52 - m;
  const std::uint64_t mask = (std::uint64_t{1} << drop) - 1;
  const std::uint64_t half = std::uint64_t{1} << (drop - 1);
  std::uint64_t bits = std::bit_cast<std::uint64_t>(ax);
  const std::uint64_t low = bits & mask;
  bits &= ~mask;
  const bool up = low > half || (low == half && (tail > 0.0 || (tail == 0.0 && ((bits >> drop) & 1) != 0)));
  if (up) bits += std::uint64_t{1} << drop;  // a carry ripples into the exponent
  return std::bit_cast<double>(bits);
}

// True when |x| is a normal double at or above the format's smallest
// normal, which is where round_bits applies.
bool on_fast_path(double ax, const FpFormat& fmt) {
  return ax >= fmt.min_positive() && ax <= std::numeric_limits<double>::max();
}

struct Unpacked {
  bool negative;
  int exponent;        // unbiased, value = significand * 2^(exponent - m)
  std::uint64_t significand;  // m + 1 bits with the leading one explicit
};

Unpacked unpack(double x, int mantissa_bits) {
  int e = 0;
  const double f = std::frexp(std::fabs(x), &e);  // f in [0.5, 1)
  return {std::signbit(x), e - 1,
          static_cast<std::uint64_t>(std::ldexp(f, mantissa_bits + 1))};
}

bool magnitude_less(const Unpacked& a, const Unpacked& b) {
  if (a.exponent != b.exponent) return a.exponent < b.exponent;
  return a.significand < b.significand;
}

double saturated(bool negative, const FpFormat& fmt) {
  return negative ? -fmt.max_value() : fmt.max_value();
}

// Rounds hi + lo (|lo| well below one ulp of hi at double precision) onto
// the format. Only the sign of lo matters except at exact ties.
double round_pair(double hi, double lo, const FpFormat& fmt) {
  if (std::isnan(hi)) throw DomainError("round_pair: NaN intermediate");
  if (std::isinf(hi)) return saturated(hi < 0, fmt);
  if (hi == 0.0) return lo == 0.0 ? hi : quantize(lo, fmt);
  if (lo == 0.0) return quantize(hi, fmt);

  const bool negative = hi < 0;
  const double ahi = std::fabs(hi);
  const double alo = negative ? -lo : lo;
  if (on_fast_path(ahi, fmt)) {
    const double r = std::min(round_bits(ahi, fmt.mantissa_bits, alo), fmt.max_value());
    return negative ? -r : r;
  }
  const int m = fmt.mantissa_bits;
  const int e = std::max(exponent_of(ahi), fmt.emin());

  const double scaled = std::ldexp(ahi, m - e);
  double whole = std::floor(scaled);
  const double frac = scaled - whole;
  // The tail only breaks exact ties: off a midpoint, frac is at least one
  // double ulp away from 0.5 and |lo| is smaller than that.
  bool up = frac > 0.5;
  if (frac == 0.5) up = alo > 0.0 || (alo == 0.0 && std::fmod(whole, 2.0) != 0.0);
  if (up) whole += 1.0;
  double r = std::ldexp(whole, e - m);
  if (r < fmt.min_positive()) return negative ? -0.0 : 0.0;
  if (r > fmt.max_value()) r = fmt.max_value();
  return negative ? -r : r;
}

bool representable(double x, const FpFormat& fmt) {
  const double ax = std::fabs(x);
  if (ax == 0.0) return true;
  if (on_fast_path(ax, fmt)) {
    const int drop = 52 - fmt.mantissa_bits;
    const std::uint64_t mask = (std::uint64_t{1} << drop) - 1;
    return (std::bit_cast<std::uint64_t>(ax) & mask) == 0 && ax <= fmt.max_value();
  }
  return std::isfinite(x) && quantize(x, fmt) == x;
}

void require_representable(double x, const FpFormat& fmt, const char* op) {
  if (!representable(x, fmt)) [[unlikely]] {
    throw FormatError(std::string(op) + ": operand " + std::to_string(x) +
                      " is not representable in " + fmt.label());
  }
}

std::string lower(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

FpFormat FpFormat::make(int exponent_bits, int mantissa_bits, std::string name) {
  if (exponent_bits < 2 || exponent_bits > 11) {
    throw FormatError("exponent bits must lie in [2, 11], got " + std::to_string(exponent_bits));
  }
  if (mantissa_bits < 1 || mantissa_bits > 52) {
    throw FormatError("mantissa bits must lie in [1, 52], got " + std::to_string(mantissa_bits));
  }
  return FpFormat{exponent_bits, mantissa_bits, std::move(name)};
}

double FpFormat::min_positive() const {
  return std::bit_cast<double>(static_cast<std::uint64_t>(emin() + 1023) << 52);
}

double FpFormat::max_value() const {
  const std::uint64_t ones = ((std::uint64_t{1} << mantissa_bits) - 1) << (52 - mantissa_bits);
  return std::bit_cast<double>((static_cast<std::uint64_t>(emax() + 1023) << 52) | ones);
}

std::string FpFormat::triple() const {
  return "{1," + std::to_string(exponent_bits) + "," + std::to_string(mantissa_bits) + "}";
}

std::string FpFormat::label() const { return name.empty() ? triple() : name; }

DynamicRange dynamic_range(const FpFormat& fmt) { return {fmt.emin(), fmt.emax()}; }

RepresentableRange representable_range(const FpFormat& fmt) {
  return {fmt.min_positive(), fmt.max_value()};
}

namespace formats {
FpFormat fp32() { return {8, 23, "FP32"}; }
FpFormat bfloat16() { return {8, 7, "bfloat16"}; }
FpFormat fp16() { return {5, 10, "FP16"}; }
FpFormat fp10a() { return {5, 4, "FP10-A"}; }
FpFormat fp10b() { return {6, 3, "FP10-B"}; }
FpFormat fp8() { return {5, 2, "FP8"}; }
FpFormat fp64() { return {11, 52, "FP64"}; }
}  // namespace formats

const std::vector<FpFormat>& format_catalog() {
  static const std::vector<FpFormat> catalog = {
      formats::fp32(), formats::bfloat16(), formats::fp16(),
      formats::fp10a(), formats::fp10b(), formats::fp8(),
  };
  return catalog;
}

FpFormat parse_format(std::string_view text) {
  const std::string key = lower(text);
  if (key == "fp32") return formats::fp32();
  if (key == "bfloat16" || key == "bf16") return formats::bfloat16();
  if (key == "fp16") return formats::fp16();
  if (key == "fp10a") return formats::fp10a();
  if (key == "fp10b") return formats::fp10b();
  if (key == "fp8") return formats::fp8();
  if (key == "fp64") return formats::fp64();

  if (key.size() >= 2 && key.front() == '{' && key.back() == '}') {
    int s = 0, e = 0, m = 0;
    char tail = 0;
    if (std::sscanf(key.c_str(), "{%d,%d,%d%c", &s, &e, &m, &tail) == 4 && tail == '}') {
      if (s != 1) throw FormatError("sign width must be 1 in " + std::string(text));
      return FpFormat::make(e, m);
    }
  }
  throw FormatError("unknown format '" + std::string(text) + "'");
}

int exponent_of(double x) {
  int e = 0;
  std::frexp(x, &e);
  return e - 1;
}

double quantize(double x, const FpFormat& fmt) {
  if (!std::isfinite(x)) throw DomainError("quantize: non-finite input");
  if (x == 0.0) return x;

  const int m = fmt.mantissa_bits;
  const double ax = std::fabs(x);
  if (on_fast_path(ax, fmt)) return std::copysign(std::min(round_bits(ax, m, 0.0), fmt.max_value()), x);
  // Below emin the grid keeps the emin spacing, so values just under the
  // smallest normal round up to it and everything else flushes.
  const int e = std::max(exponent_of(ax), fmt.emin());
  double r = std::ldexp(std::nearbyint(std::ldexp(ax, m - e)), e - m);
  if (r < fmt.min_positive()) return std::copysign(0.0, x);
  if (r > fmt.max_value()) r = fmt.max_value();
  return std::copysign(r, x);
}

bool is_representable(double x, const FpFormat& fmt) { return representable(x, fmt); }

double fp_add(double a, double b, const FpFormat& fmt) {
  require_representable(a, fmt, "fp_add");
  require_representable(b, fmt, "fp_add");
  if (b == 0.0) return a == 0.0 ? a + b : a;
  if (a == 0.0) return b;

  // Exact sum as an unevaluated pair (TwoSum); the tail only breaks ties.
  const double s = a + b;
  if (std::isfinite(s) && on_fast_path(std::fabs(s), fmt)) {
    const double bb = s - a;
    const double tail = (a - (s - bb)) + (b - bb);
    return round_pair(s, tail, fmt);
  }

  const int m = fmt.mantissa_bits;
  Unpacked big = unpack(a, m);
  Unpacked small = unpack(b, m);
  if (magnitude_less(big, small)) std::swap(big, small);

  const int shift = big.exponent - small.exponent;
  const std::uint64_t lhs = big.significand << kExtraBits;
  std::uint64_t rhs = small.significand << kExtraBits;
  if (shift >= 64) {
    rhs = 1;  // only the sticky bit survives
  } else if (shift > 0) {
    const bool lost = (rhs & ((std::uint64_t{1} << shift) - 1)) != 0;
    rhs >>= shift;
    if (lost) rhs |= 1;
  }

  const std::uint64_t hidden = std::uint64_t{1} << (m + kExtraBits);
  int exponent = big.exponent;
  std::uint64_t sum = 0;
  if (big.negative == small.negative) {
    sum = lhs + rhs;
    if (sum >= (hidden << 1)) {
      const std::uint64_t sticky = sum & 1;
      sum = (sum >> 1) | sticky;
      ++exponent;
    }
  } else {
    sum = lhs - rhs;
    if (sum == 0) return 0.0;
    while (sum < hidden) {
      sum <<= 1;
      --exponent;
    }
  }

  const std::uint64_t low = sum & ((std::uint64_t{1} << kExtraBits) - 1);
  const std::uint64_t halfway = std::uint64_t{1} << (kExtraBits - 1);
  sum >>= kExtraBits;
  if (low > halfway || (low == halfway && (sum & 1) != 0)) {
    ++sum;
    if (sum == (std::uint64_t{1} << (m + 1))) {
      sum >>= 1;
      ++exponent;
    }
  }

  if (exponent > fmt.emax()) return saturated(big.negative, fmt);
  // Differences that fall below the smallest normal are exact multiples of
  // the emin spacing and therefore below the rounding threshold.
  if (exponent < fmt.emin()) return big.negative ? -0.0 : 0.0;
  const double magnitude = std::ldexp(static_cast<double>(sum), exponent - m);
  return big.negative ? -magnitude : magnitude;
}

double fp_sub(double a, double b, const FpFormat& fmt) { return fp_add(a, -b, fmt); }

double fp_mul(double a, double b, const FpFormat& fmt) {
  require_representable(a, fmt, "fp_mul");
  require_representable(b, fmt, "fp_mul");
  const double p = a * b;
  const double err = std::isfinite(p) ? std::fma(a, b, -p) : 0.0;
  return round_pair(p, err, fmt);
}

double fp_div(double a, double b, const FpFormat& fmt) {
  require_representable(a, fmt, "fp_div");
  require_representable(b, fmt, "fp_div");
  if (b == 0.0) {
    if (a == 0.0) return 0.0;
    return saturated(std::signbit(a) != std::signbit(b), fmt);
  }
  const double q = a / b;
  if (!std::isfinite(q)) return round_pair(q, 0.0, fmt);
  const double rem = std::fma(-q, b, a);
  return round_pair(q, rem / b, fmt);
}

double fp_sqrt(double a, const FpFormat& fmt) {
  require_representable(a, fmt, "fp_sqrt");
  if (a < 0.0) throw DomainError("fp_sqrt: negative operand");
  if (a == 0.0) return 0.0;
  const double s = std::sqrt(a);
  const double rem = std::fma(-s, s, a);
  return round_pair(s, rem / (2.0 * s), fmt);
}

double fp_sum(std::span<const double> xs, const FpFormat& fmt) {
  double acc = 0.0;
  for (double x : xs) acc = fp_add(acc, x, fmt);
  return acc;
}

}  // namespace lightnorm
