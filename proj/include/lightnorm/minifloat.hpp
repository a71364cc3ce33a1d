#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lightnorm {

/// A binary floating-point format with one sign bit, `exponent_bits` of
/// exponent and `mantissa_bits` of stored fraction.
///
/// Unlike IEEE 754, every exponent code encodes a finite normal number:
/// there are no subnormals, infinities or NaNs. Results below the smallest
/// normal flush to zero and results above the largest finite value saturate.
struct FpFormat {
  int exponent_bits = 8;
  int mantissa_bits = 23;
  std::string name;

  /// Validates the bit widths (2 <= e <= 11, 1 <= m <= 52).
  static FpFormat make(int exponent_bits, int mantissa_bits, std::string name = {});

  [[nodiscard]] int total_bits() const { return 1 + exponent_bits + mantissa_bits; }
  [[nodiscard]] int bias() const { return (1 << (exponent_bits - 1)) - 1; }
  [[nodiscard]] int emin() const { return 1 - bias(); }
  [[nodiscard]] int emax() const { return bias(); }
  [[nodiscard]] double min_positive() const;
  [[nodiscard]] double max_value() const;
  /// Name if set, otherwise the "{1,e,m}" triple.
  [[nodiscard]] std::string label() const;
  [[nodiscard]] std::string triple() const;

  friend bool operator==(const FpFormat& a, const FpFormat& b) {
    return a.exponent_bits == b.exponent_bits && a.mantissa_bits == b.mantissa_bits;
  }
};

struct DynamicRange {
  int emin;
  int emax;
};

struct RepresentableRange {
  double min_positive;
  double max;
};

[[nodiscard]] DynamicRange dynamic_range(const FpFormat& fmt);
[[nodiscard]] RepresentableRange representable_range(const FpFormat& fmt);

namespace formats {
FpFormat fp32();
FpFormat bfloat16();
FpFormat fp16();
FpFormat fp10a();
FpFormat fp10b();
FpFormat fp8();
/// Double precision without subnormals; used as the reference format.
FpFormat fp64();
}  // namespace formats

/// The six presets in table order: fp32, bfloat16, fp16, fp10a, fp10b, fp8.
const std::vector<FpFormat>& format_catalog();

/// Accepts a preset name ("fp32", "bfloat16", "fp16", "fp10a", "fp10b",
/// "fp8", "fp64") or an explicit "{1,e,m}" triple.
FpFormat parse_format(std::string_view text);

/// floor(log2(|x|)) for nonzero finite x.
int exponent_of(double x);

/// Round-to-nearest-even onto the format. Magnitudes below
/// 2^emin * (1 - 2^-(m+1)) flush to zero; magnitudes that round above the
/// largest finite value saturate. Throws DomainError on non-finite input.
[[nodiscard]] double quantize(double x, const FpFormat& fmt);

[[nodiscard]] bool is_representable(double x, const FpFormat& fmt);

/// Bit-level emulated addition: the smaller-exponent significand is shifted
/// right by the exponent gap into guard/round/sticky bits, then the sum is
/// renormalized and rounded to nearest even. Operands must be representable
/// in `fmt` (FormatError otherwise).
[[nodiscard]] double fp_add(double a, double b, const FpFormat& fmt);
[[nodiscard]] double fp_sub(double a, double b, const FpFormat& fmt);
/// Correctly rounded product.
[[nodiscard]] double fp_mul(double a, double b, const FpFormat& fmt);
/// Correctly rounded quotient. x/0 saturates to +-max, 0/0 is 0.
[[nodiscard]] double fp_div(double a, double b, const FpFormat& fmt);
/// Correctly rounded square root of a nonnegative operand.
[[nodiscard]] double fp_sqrt(double a, const FpFormat& fmt);

/// Strict left-to-right fold of fp_add starting from zero. The order is part
/// of the contract because zero-setting error depends on it.
[[nodiscard]] double fp_sum(std::span<const double> xs, const FpFormat& fmt);

/// Binds a format to the arithmetic above so datapaths read naturally.
class FpContext {
 public:
  explicit FpContext(FpFormat fmt) : fmt_(std::move(fmt)) {}

  [[nodiscard]] const FpFormat& format() const { return fmt_; }

  [[nodiscard]] double q(double x) const { return quantize(x, fmt_); }
  [[nodiscard]] double add(double a, double b) const { return fp_add(a, b, fmt_); }
  [[nodiscard]] double sub(double a, double b) const { return fp_sub(a, b, fmt_); }
  [[nodiscard]] double mul(double a, double b) const { return fp_mul(a, b, fmt_); }
  [[nodiscard]] double div(double a, double b) const { return fp_div(a, b, fmt_); }
  [[nodiscard]] double sqrt(double a) const { return fp_sqrt(a, fmt_); }
  [[nodiscard]] double sum(std::span<const double> xs) const { return fp_sum(xs, fmt_); }

 private:
  FpFormat fmt_;
};

}  // namespace lightnorm
