#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gnt/errors.hpp"

namespace gnt {

// Kahan-compensated mean of exp(-t * y); million-term sums at 1e-6 targets.
inline double empirical_mgf(std::span<const double> samples, double t) {
    if (samples.empty()) throw validation_error("empirical_mgf: empty sample set");
    if (!(t > 0.0)) throw validation_error("empirical_mgf: t must be positive");
    double sum = 0.0, comp = 0.0;
    for (double y : samples) {
        const double term = std::exp(-t * y) - comp;
        const double next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    return sum / static_cast<double>(samples.size());
}

namespace mgf_detail {

inline void check_tau(const std::vector<double>& tau) {
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (!(tau[i] > 0.0)) throw validation_error("tau entries must be strictly positive");
        for (std::size_t j = i + 1; j < tau.size(); ++j)
            if (tau[i] == tau[j]) throw validation_error("tau entries must be distinct");
    }
}

}  // namespace mgf_detail

// c(t) = M(t) * (lambda_last + t)^n_links - lambda_last^n_links, evaluated
// over the grid with an arbitrary MGF evaluator.
inline std::vector<double> c_vector_from_mgf(const std::function<double(double)>& mgf,
                                             const std::vector<double>& tau, int n_links,
                                             double lambda_last) {
    mgf_detail::check_tau(tau);
    if (n_links < 1) throw validation_error("c_vector: n_links must be >= 1");
    std::vector<double> out(tau.size());
    const double base = std::pow(lambda_last, n_links);
    for (std::size_t k = 0; k < tau.size(); ++k)
        out[k] = mgf(tau[k]) * std::pow(lambda_last + tau[k], n_links) - base;
    return out;
}

inline std::vector<double> c_vector(std::span<const double> samples, const std::vector<double>& tau,
                                    int n_links, double lambda_last) {
    return c_vector_from_mgf([samples](double t) { return empirical_mgf(samples, t); }, tau,
                             n_links, lambda_last);
}

// Smallest L with num_points * exp(-2 eps^2 L) <= kappa (union bound over
// the grid). The tiny slack keeps exact-boundary inputs from rounding up.
inline std::uint64_t hoeffding_sample_size(double eps, double kappa, std::uint64_t num_points) {
    if (!(eps > 0.0 && eps < 1.0) || !(kappa > 0.0 && kappa < 1.0))
        throw validation_error("hoeffding_sample_size: eps and kappa must lie in (0,1)");
    if (num_points < 1) throw validation_error("hoeffding_sample_size: num_points must be >= 1");
    const double v = std::log(static_cast<double>(num_points) / kappa) / (2.0 * eps * eps);
    return static_cast<std::uint64_t>(std::ceil(v - 1e-9 * std::max(1.0, std::abs(v))));
}

}  // namespace gnt
