#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <string>

#include "gnt/errors.hpp"

namespace gnt {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Exact conversion: every finite double is m * 2^e.
inline Rational rational_from_double(double x) {
    if (!std::isfinite(x)) throw validation_error("rational_from_double: non-finite value");
    if (x == 0.0) return Rational(0);
    int exp = 0;
    const double mant = std::frexp(x, &exp);
    // 53 doublings turn the mantissa into an integer.
    BigInt num = static_cast<long long>(std::ldexp(mant, 53));
    exp -= 53;
    Rational r(num);
    if (exp > 0)
        r *= Rational(BigInt(1) << exp);
    else if (exp < 0)
        r /= Rational(BigInt(1) << (-exp));
    return r;
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline Rational rational_pow(const Rational& base, long e) {
    if (e == 0) return Rational(1);
    if (e < 0) {
        if (base == 0) throw numeric_error("rational_pow: zero base with negative exponent");
        return Rational(1) / rational_pow(base, -e);
    }
    Rational acc(1), b = base;
    long n = e;
    while (n > 0) {
        if (n & 1) acc *= b;
        b *= b;
        n >>= 1;
    }
    return acc;
}

inline BigInt binomial(long n, long r) {
    if (r < 0 || r > n) return BigInt(0);
    r = std::min(r, n - r);
    BigInt acc(1);
    for (long i = 1; i <= r; ++i) {
        acc *= (n - r + i);
        acc /= i;
    }
    return acc;
}

inline std::string rational_to_string(const Rational& r) { return r.str(); }

inline Rational rational_from_string(const std::string& s) { return Rational(s); }

}  // namespace gnt
