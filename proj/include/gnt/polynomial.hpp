#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/rational.hpp"

namespace gnt {

using Monomial = std::vector<std::uint16_t>;  // exponent per variable

// Sparse multivariate polynomial, canonical by construction: terms live in
// a map keyed by exponent vector (lexicographic order) and zero coefficients
// are dropped. Exact-coefficient instantiations compare with operator==.
template <typename Coeff>
struct MultiPoly {
    int nvars = 0;
    std::map<Monomial, Coeff> terms;

    MultiPoly() = default;
    explicit MultiPoly(int n) : nvars(n) {}

    void add_term(const Monomial& mono, const Coeff& c) {
        if (c == Coeff(0)) return;
        auto [it, inserted] = terms.emplace(mono, c);
        if (!inserted) {
            it->second += c;
            if (it->second == Coeff(0)) terms.erase(it);
        }
    }

    MultiPoly& operator+=(const MultiPoly& other) {
        for (const auto& [mono, c] : other.terms) add_term(mono, c);
        return *this;
    }

    MultiPoly scaled(const Coeff& f) const {
        MultiPoly out(nvars);
        if (f == Coeff(0)) return out;
        for (const auto& [mono, c] : terms) out.terms.emplace(mono, c * f);
        return out;
    }

    int total_degree() const {
        int deg = 0;
        for (const auto& [mono, c] : terms) {
            int d = 0;
            for (auto e : mono) d += e;
            deg = std::max(deg, d);
        }
        return deg;
    }

    MultiPoly partial(int var) const {
        MultiPoly out(nvars);
        for (const auto& [mono, c] : terms) {
            if (mono[var] == 0) continue;
            Monomial m = mono;
            const int e = m[var]--;
            out.add_term(m, c * Coeff(e));
        }
        return out;
    }

    template <typename T>
    T eval(const std::vector<T>& x) const {
        T acc(0);
        for (const auto& [mono, c] : terms) {
            T t = coeff_cast<T>(c);
            for (int v = 0; v < nvars; ++v)
                for (int e = 0; e < mono[v]; ++e) t *= x[v];
            acc += t;
        }
        return acc;
    }

    // Relabels the variable blocks: variable (j, k) -> (perm[j], k), with
    // block_size variables per block.
    MultiPoly permuted_blocks(const std::vector<int>& perm, int block_size) const {
        MultiPoly out(nvars);
        for (const auto& [mono, c] : terms) {
            Monomial m(nvars, 0);
            for (int v = 0; v < nvars; ++v) {
                if (mono[v] == 0) continue;
                const int j = v / block_size, k = v % block_size;
                m[perm[j] * block_size + k] = mono[v];
            }
            out.add_term(m, c);
        }
        return out;
    }

    bool operator==(const MultiPoly& other) const {
        return nvars == other.nvars && terms == other.terms;
    }

private:
    template <typename T>
    static T coeff_cast(const Coeff& c) {
        if constexpr (std::is_same_v<Coeff, Rational>)
            return T(to_double(c));
        else
            return T(c);
    }
};

inline MultiPoly<double> to_double_poly(const MultiPoly<Rational>& p) {
    MultiPoly<double> out(p.nvars);
    for (const auto& [mono, c] : p.terms) out.terms.emplace(mono, to_double(c));
    return out;
}

// All length-`parts` vectors of nonnegative integers summing to `total`,
// in lexicographic order.
inline std::vector<std::vector<int>> compositions(int total, int parts) {
    std::vector<std::vector<int>> out;
    if (parts == 0) {
        if (total == 0) out.push_back({});
        return out;
    }
    std::vector<int> cur(parts, 0);
    auto rec = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == parts - 1) {
            cur[pos] = remaining;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    rec(rec, 0, total);
    return out;
}

}  // namespace gnt
