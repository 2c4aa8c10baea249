#pragma once

#include <cstdint>
#include <compare>
#include <cstdlib>
#include <string>
#include <string_view>

#include "iacforge/errors.hpp"

namespace iacforge {

/// Fixed-point decimal with six fractional digits, stored as a scaled
/// int64. All money, weights, and routing scores go through this type so
/// that report arithmetic is exact and reproducible; no IEEE double ever
/// touches a value that ends up in a digest or an assertion.
class Decimal {
 public:
  static constexpr std::int64_t kScale = 1'000'000;  // 10^6

  constexpr Decimal() = default;

  static constexpr Decimal from_scaled(std::int64_t units) {
    Decimal d;
    d.units_ = units;
    return d;
  }

  static constexpr Decimal from_int(std::int64_t v) { return from_scaled(v * kScale); }

  /// Parses "[-]digits[.digits]". More than six fractional digits is a
  /// parse error rather than a silent rounding.
  static Decimal parse(std::string_view text) {
    if (text.empty()) throw Error(ErrorCode::parse_error, "empty decimal literal");
    bool negative = false;
    std::size_t i = 0;
    if (text[0] == '-') {
      negative = true;
      i = 1;
    } else if (text[0] == '+') {
      i = 1;
    }
    if (i >= text.size()) throw Error(ErrorCode::parse_error, "bare sign in decimal literal");
    std::int64_t whole = 0;
    bool any_digit = false;
    for (; i < text.size() && text[i] != '.'; ++i) {
      if (text[i] < '0' || text[i] > '9')
        throw Error(ErrorCode::parse_error, "bad decimal literal: " + std::string(text));
      whole = whole * 10 + (text[i] - '0');
      any_digit = true;
    }
    std::int64_t frac = 0;
    int frac_digits = 0;
    if (i < text.size() && text[i] == '.') {
      ++i;
      for (; i < text.size(); ++i) {
        if (text[i] < '0' || text[i] > '9')
          throw Error(ErrorCode::parse_error, "bad decimal literal: " + std::string(text));
        if (frac_digits == 6)
          throw Error(ErrorCode::parse_error,
                      "decimal literal exceeds 6 fractional digits: " + std::string(text));
        frac = frac * 10 + (text[i] - '0');
        ++frac_digits;
        any_digit = true;
      }
    }
    if (!any_digit) throw Error(ErrorCode::parse_error, "bad decimal literal: " + std::string(text));
    for (; frac_digits < 6; ++frac_digits) frac *= 10;
    std::int64_t units = whole * kScale + frac;
    return from_scaled(negative ? -units : units);
  }

  [[nodiscard]] constexpr std::int64_t scaled() const { return units_; }
  [[nodiscard]] constexpr bool is_zero() const { return units_ == 0; }
  [[nodiscard]] constexpr bool is_negative() const { return units_ < 0; }

  /// Canonical text: minimal digits, no exponent, no trailing zeros,
  /// "0" for zero. This is the form used in canonical serializations.
  [[nodiscard]] std::string to_string() const {
    std::int64_t u = units_;
    std::string sign;
    if (u < 0) {
      sign = "-";
      u = -u;
    }
    std::int64_t whole = u / kScale;
    std::int64_t frac = u % kScale;
    std::string out = sign + std::to_string(whole);
    if (frac != 0) {
      std::string f = std::to_string(frac);
      f.insert(0, 6 - f.size(), '0');
      while (!f.empty() && f.back() == '0') f.pop_back();
      out += "." + f;
    }
    return out;
  }

  [[nodiscard]] double to_double() const {
    return static_cast<double>(units_) / static_cast<double>(kScale);
  }

  friend constexpr Decimal operator+(Decimal a, Decimal b) {
    return from_scaled(a.units_ + b.units_);
  }
  friend constexpr Decimal operator-(Decimal a, Decimal b) {
    return from_scaled(a.units_ - b.units_);
  }
  friend constexpr Decimal operator-(Decimal a) { return from_scaled(-a.units_); }

  /// Product, rounded half away from zero at the sixth fractional digit.
  friend constexpr Decimal operator*(Decimal a, Decimal b) {
    __int128 p = static_cast<__int128>(a.units_) * static_cast<__int128>(b.units_);
    __int128 half = kScale / 2;
    __int128 q = p >= 0 ? (p + half) / kScale : (p - half) / kScale;
    return from_scaled(static_cast<std::int64_t>(q));
  }

  /// Quotient, same rounding. Division by zero is a hard error.
  friend Decimal operator/(Decimal a, Decimal b) {
    if (b.units_ == 0) throw Error(ErrorCode::config_error, "decimal division by zero");
    __int128 n = static_cast<__int128>(a.units_) * kScale;
    __int128 d = b.units_;
    bool neg = (n < 0) != (d < 0);
    if (n < 0) n = -n;
    if (d < 0) d = -d;
    __int128 q = (n + d / 2) / d;
    return from_scaled(static_cast<std::int64_t>(neg ? -q : q));
  }

  friend constexpr auto operator<=>(Decimal a, Decimal b) = default;

  Decimal& operator+=(Decimal o) {
    units_ += o.units_;
    return *this;
  }

 private:
  std::int64_t units_ = 0;
};

inline Decimal max(Decimal a, Decimal b) { return a < b ? b : a; }

}  // namespace iacforge
