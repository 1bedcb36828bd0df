#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sfe {

// Exact rational with 64-bit numerator/denominator and 128-bit intermediates.
// Denominator is always positive; values are kept reduced.
class Rat {
 public:
  constexpr Rat() = default;
  Rat(long long num, long long den = 1) { assign(num, den); }

  long long num() const { return static_cast<long long>(num_); }
  long long den() const { return static_cast<long long>(den_); }

  bool is_zero() const { return num_ == 0; }

  friend Rat operator+(const Rat& a, const Rat& b) {
    return make(i128(a.num_) * b.den_ + i128(b.num_) * a.den_,
                i128(a.den_) * b.den_);
  }
  friend Rat operator-(const Rat& a, const Rat& b) {
    return make(i128(a.num_) * b.den_ - i128(b.num_) * a.den_,
                i128(a.den_) * b.den_);
  }
  friend Rat operator*(const Rat& a, const Rat& b) {
    return make(i128(a.num_) * b.num_, i128(a.den_) * b.den_);
  }
  friend Rat operator/(const Rat& a, const Rat& b) {
    if (b.num_ == 0) throw std::domain_error("rational division by zero");
    return make(i128(a.num_) * b.den_, i128(a.den_) * b.num_);
  }
  Rat& operator+=(const Rat& o) { return *this = *this + o; }

  friend bool operator==(const Rat& a, const Rat& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rat& a, const Rat& b) { return !(a == b); }
  friend bool operator<(const Rat& a, const Rat& b) {
    return i128(a.num_) * b.den_ < i128(b.num_) * a.den_;
  }
  friend bool operator<=(const Rat& a, const Rat& b) { return !(b < a); }
  friend bool operator>(const Rat& a, const Rat& b) { return b < a; }
  friend bool operator>=(const Rat& a, const Rat& b) { return !(a < b); }

  double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  // Decimal rendering by long division, trailing zeros stripped.
  std::string to_decimal(int max_digits = 12) const {
    i128 n = num_, d = den_;
    std::string out;
    if (n < 0) {
      out += '-';
      n = -n;
    }
    out += std::to_string(static_cast<long long>(n / d));
    i128 rem = n % d;
    if (rem == 0) return out;
    out += '.';
    std::string frac;
    for (int i = 0; i < max_digits && rem != 0; ++i) {
      rem *= 10;
      frac += static_cast<char>('0' + static_cast<int>(rem / d));
      rem %= d;
    }
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    return out + frac;
  }

 private:
  using i128 = __int128;

  static i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      i128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  static Rat make(i128 n, i128 d) {
    Rat r;
    r.assign128(n, d);
    return r;
  }

  void assign(long long n, long long d) { assign128(n, d); }

  void assign128(i128 n, i128 d) {
    if (d == 0) throw std::domain_error("rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    i128 g = gcd128(n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    constexpr i128 kMax = INT64_MAX;
    if (n > kMax || n < -kMax || d > kMax)
      throw std::overflow_error("rational overflow");
    num_ = static_cast<long long>(n);
    den_ = static_cast<long long>(d);
  }

  long long num_ = 0;
  long long den_ = 1;
};

}  // namespace sfe
