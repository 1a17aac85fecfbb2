#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/rng.hpp"

namespace gnt {

// Mixture of exponential CDFs with a shared, known rate basis. Weights sum
// to one but individual weights may be negative as long as the density
// stays nonnegative. rates.back() is the designated pivot rate.
struct GHModel {
    std::vector<double> rates;
    std::vector<double> weights;

    int stage_count() const { return static_cast<int>(rates.size()); }
    int free_stage_count() const { return stage_count() - 1; }
};

struct GHViolation {
    std::string constraint;  // "rates_positive" | "rates_distinct" | "weight_sum" | "density"
    std::string detail;
    double witness_u = 0.0;  // only meaningful for "density"
};

namespace gh_detail {

constexpr double kWeightSumTol = 1e-12;

inline double density_scale(const GHModel& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k) s += std::abs(m.weights[k]) * m.rates[k];
    return s;
}

}  // namespace gh_detail

inline double gh_pdf(const GHModel& m, double u) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k)
        s += m.weights[k] * m.rates[k] * std::exp(-m.rates[k] * u);
    return s;
}

inline double gh_cdf_unchecked(const GHModel& m, double u) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k)
        s += m.weights[k] * (1.0 - std::exp(-m.rates[k] * u));
    return s;
}

// Checks, in order: structural fields, positivity, rate distinctness, weight
// sum, density nonnegativity. The density is scanned on a log-spaced grid
// over [0, 50/min_rate] plus an asymptotic sign check on the slowest stage;
// the tolerance scales with sum |w_k| lambda_k so that large-basis models
// built by gh_approximate are not rejected on accumulated roundoff.
inline std::optional<GHViolation> gh_validate(const GHModel& m) {
    if (m.rates.empty() || m.rates.size() != m.weights.size())
        return GHViolation{"structure", "rates/weights size mismatch or empty", 0.0};
    for (double r : m.rates)
        if (!(r > 0.0) || !std::isfinite(r))
            return GHViolation{"rates_positive", "rate " + std::to_string(r) + " not strictly positive", 0.0};

    std::vector<double> sorted = m.rates;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] - sorted[i - 1] <= 1e-12 * sorted[i])
            return GHViolation{"rates_distinct",
                               "duplicate rates near " + std::to_string(sorted[i]), 0.0};
    }

    const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    if (std::abs(wsum - 1.0) > 1e-9)
        return GHViolation{"weight_sum", "weights sum to " + std::to_string(wsum), 0.0};

    // Asymptotics: the slowest stage dominates as u grows, so its weight
    // must be nonnegative for the density to stay nonnegative.
    const double min_rate = sorted.front();
    const double tol = 1e-12 * std::max(1.0, gh_detail::density_scale(m));
    double min_rate_weight = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k)
        if (m.rates[k] == min_rate) min_rate_weight = m.weights[k];
    if (min_rate_weight < -tol)
        return GHViolation{"density", "negative weight on the slowest stage", 1e308};

    const double u_hi = 50.0 / min_rate;
    const int grid = 2048;
    double worst = 0.0, worst_u = 0.0;
    // u = 0 plus log-spaced points down to u_hi * 1e-8.
    double f0 = gh_pdf(m, 0.0);
    if (f0 < worst) { worst = f0; worst_u = 0.0; }
    const double lo = std::log(u_hi * 1e-8), hi = std::log(u_hi);
    for (int i = 0; i < grid; ++i) {
        const double u = std::exp(lo + (hi - lo) * i / (grid - 1));
        const double f = gh_pdf(m, u);
        if (f < worst) { worst = f; worst_u = u; }
    }
    if (worst < -tol)
        return GHViolation{"density", "density " + std::to_string(worst) + " at u = " +
                                          std::to_string(worst_u),
                           worst_u};
    return std::nullopt;
}

inline void gh_require_valid(const GHModel& m) {
    if (auto v = gh_validate(m))
        throw validation_error("invalid GH model: " + v->constraint + " (" + v->detail + ")");
}

inline double gh_cdf(const GHModel& m, double u) {
    gh_require_valid(m);
    if (u < 0.0) throw validation_error("gh_cdf: negative argument");
    return std::clamp(gh_cdf_unchecked(m, u), 0.0, 1.0);
}

inline double gh_mgf_unchecked(const GHModel& m, double t) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k)
        s += m.weights[k] * m.rates[k] / (m.rates[k] + t);
    return s;
}

// E exp(-tX) = sum_k w_k lambda_k / (lambda_k + t).
inline double gh_mgf(const GHModel& m, double t) {
    gh_require_valid(m);
    if (t < 0.0) throw validation_error("gh_mgf: negative argument");
    return gh_mgf_unchecked(m, t);
}

inline double gh_mean(const GHModel& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k) s += m.weights[k] / m.rates[k];
    return s;
}

// Inverse CDF by bracketed bisection to width 1e-12 followed by two Newton
// polish steps. Negative weights rule out per-stage mixture sampling, so
// inversion of the monotone CDF is the one generic route.
inline double gh_invert_cdf(const GHModel& m, double p) {
    double lo = 0.0, hi = 1.0 / m.rates.back();
    int expand = 0;
    while (gh_cdf_unchecked(m, hi) < p) {
        lo = hi;
        hi *= 2.0;
        if (++expand > 400) throw numeric_error("gh_invert_cdf: bracket expansion failed");
    }
    const double width_tol = 1e-12;
    int iters = 0;
    while (hi - lo > width_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // hit representable resolution
        if (gh_cdf_unchecked(m, mid) < p)
            lo = mid;
        else
            hi = mid;
        if (++iters > 200) throw numeric_error("gh_invert_cdf: bisection failed to converge");
    }
    double u = 0.5 * (lo + hi);
    for (int step = 0; step < 2; ++step) {
        const double f = gh_pdf(m, u);
        if (f <= 0.0) break;
        const double un = u - (gh_cdf_unchecked(m, u) - p) / f;
        if (un >= lo && un <= hi) u = un;
    }
    return u;
}

// IID draws, deterministic in (seed, index); one substream per sample.
inline std::vector<double> gh_sample(const GHModel& m, std::uint64_t seed, std::size_t n) {
    gh_require_valid(m);
    if (n == 0) throw validation_error("gh_sample: n must be >= 1");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        SubstreamRng rng(seed, /*tag0=*/0, /*tag1=*/i);
        out[i] = gh_invert_cdf(m, rng.next_double());
    }
    return out;
}

struct ApproxOptions {
    int stages = 0;           // per-bucket Erlang stage count; 0 = scale with resolution
    double spread = 0.25;     // multiplicative rate perturbation step between stages
    std::size_t basis_cap = 4096;  // max total rates before reporting a capacity error
};

// Mixture-of-buckets approximation of an arbitrary continuous CDF on
// (0, inf): bucket k receives the target's mass over ((k-1)/n, k/n] and is
// represented by a low-variance surrogate built from the partial-fraction
// expansion of an Erlang whose stage rates are spread apart multiplicatively
// so all basis rates stay distinct. Bucket means are preserved exactly and
// the telescoping masses sum to one by construction.
inline GHModel gh_approximate(const std::function<double(double)>& target_cdf, int n, int nu_n,
                              const ApproxOptions& opt = {}) {
    if (n < 1 || nu_n < 1) throw validation_error("gh_approximate: n and nu_n must be >= 1");
    int m = opt.stages;
    if (m <= 0) m = std::max(8, 2 * static_cast<int>(std::lround(std::sqrt(double(n)))));
    const double eps = opt.spread;

    const std::size_t total_rates = static_cast<std::size_t>(m) * (nu_n + 1);
    if (total_rates > opt.basis_cap)
        throw numeric_error("gh_approximate: basis size " + std::to_string(total_rates) +
                            " exceeds cap " + std::to_string(opt.basis_cap));

    // Stage factors f_j = 1 + j*eps and their partial-fraction weights,
    // shared by every bucket (the weights do not depend on the bucket rate).
    std::vector<double> factor(m), alpha(m);
    double inv_sum = 0.0;
    for (int j = 0; j < m; ++j) {
        factor[j] = 1.0 + (j + 1) * eps;
        inv_sum += 1.0 / factor[j];
    }
    for (int j = 0; j < m; ++j) {
        double a = 1.0;
        for (int l = 0; l < m; ++l)
            if (l != j) a *= factor[l] / (factor[l] - factor[j]);
        alpha[j] = a;
    }

    GHModel out;
    out.rates.reserve(total_rates);
    out.weights.reserve(total_rates);
    double prev = 0.0;
    for (int k = 1; k <= nu_n + 1; ++k) {
        double mass;
        double mean;
        if (k <= nu_n) {
            const double fk = target_cdf(double(k) / n);
            mass = fk - prev;
            prev = fk;
            mean = double(k) / n;
        } else {
            mass = 1.0 - prev;  // tail bucket
            mean = double(nu_n + 1) / n;
        }
        if (mass == 0.0) continue;
        const double c = inv_sum / mean;  // sum_j 1/(c*f_j) == mean
        for (int j = 0; j < m; ++j) {
            out.rates.push_back(c * factor[j]);
            out.weights.push_back(mass * alpha[j]);
        }
    }

    // Buckets can land on a shared rate (k1*f_j1 == k2*f_j2); identical
    // exponential terms merge exactly.
    std::vector<std::size_t> order(out.rates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return out.rates[a] < out.rates[b]; });
    GHModel merged;
    for (std::size_t idx : order) {
        if (!merged.rates.empty() &&
            out.rates[idx] - merged.rates.back() <= 1e-9 * out.rates[idx]) {
            merged.weights.back() += out.weights[idx];
        } else {
            merged.rates.push_back(out.rates[idx]);
            merged.weights.push_back(out.weights[idx]);
        }
    }
    gh_require_valid(merged);
    return merged;
}

}  // namespace gnt
