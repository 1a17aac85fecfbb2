#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/mgf.hpp"
#include "gnt/solver.hpp"

namespace gnt {

// All-exponential-links variant: the reciprocal path MGF is a polynomial in
// the link means, so the per-path system reduces to elementary symmetric
// targets behind a Vandermonde solve and exact univariate root-finding.
struct ExpMeanInstance {
    int n_links = 0;
    int path_id = -1;
    std::vector<double> tau;
    Eigen::VectorXd c_tau;    // 1/M(t) per grid point
    Eigen::VectorXd targets;  // elementary symmetric evaluations at the means
};

inline double vandermonde_det_closed(const std::vector<double>& ts) {
    double det = 1.0;
    for (double t : ts) det *= t;
    for (std::size_t i = 0; i < ts.size(); ++i)
        for (std::size_t j = i + 1; j < ts.size(); ++j) det *= ts[j] - ts[i];
    return det;
}

inline Eigen::MatrixXd vandermonde_matrix(const std::vector<double>& ts) {
    const int n = static_cast<int>(ts.size());
    Eigen::MatrixXd t_mat(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) t_mat(j, k) = std::pow(ts[j], k + 1);
    return t_mat;
}

inline ExpMeanInstance build_expmean_from_mgf(const std::function<double(double)>& mgf,
                                              const std::vector<double>& tau) {
    mgf_detail::check_tau(tau);
    ExpMeanInstance inst;
    inst.n_links = static_cast<int>(tau.size());
    inst.tau = tau;
    inst.c_tau.resize(inst.n_links);
    for (int k = 0; k < inst.n_links; ++k) {
        const double m = mgf(tau[k]);
        if (!(m > 1e-300))
            throw numeric_error("expmean: MGF vanishes at t = " + std::to_string(tau[k]) +
                                "; target would overflow");
        inst.c_tau(k) = 1.0 / m;
    }
    const Eigen::MatrixXd t_mat = vandermonde_matrix(tau);
    inst.targets = Eigen::FullPivLU<Eigen::MatrixXd>(t_mat).solve(
        inst.c_tau - Eigen::VectorXd::Ones(inst.n_links));
    return inst;
}

inline ExpMeanInstance build_expmean(std::span<const double> samples,
                                     const std::vector<double>& tau) {
    return build_expmean_from_mgf([samples](double t) { return empirical_mgf(samples, t); }, tau);
}

struct ExpMeanSolution {
    std::vector<Complex> means;  // sorted by descending real part
    bool complex_flag = false;   // imaginary parts beyond tolerance
    bool equal_flag = false;     // coincident means (excluded by the model)
};

// Vieta inversion: the means are the roots of
// z^n - e1 z^{n-1} + e2 z^{n-2} - ...; companion-matrix eigenvalues.
inline ExpMeanSolution solve_expmean(const ExpMeanInstance& inst) {
    const int n = inst.n_links;
    ExpMeanSolution out;
    if (n == 1) {
        out.means = {Complex(inst.targets(0), 0.0)};
        return out;
    }
    // Monic coefficients a_k of z^n + a_{n-1} z^{n-1} + ... + a_0.
    std::vector<double> a(n);
    for (int k = 1; k <= n; ++k) a[n - k] = (k % 2 ? -1.0 : 1.0) * inst.targets(k - 1);
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -a[i];
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
    if (es.info() != Eigen::Success) throw numeric_error("expmean: eigenvalue solver failed");
    for (int i = 0; i < n; ++i) out.means.push_back(es.eigenvalues()(i));
    std::sort(out.means.begin(), out.means.end(),
              [](const Complex& x, const Complex& y) { return x.real() > y.real(); });
    for (const auto& z : out.means)
        if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z))) out.complex_flag = true;
    for (std::size_t i = 0; i + 1 < out.means.size(); ++i)
        if (std::abs(out.means[i] - out.means[i + 1]) <= 1e-9 * (1.0 + std::abs(out.means[i])))
            out.equal_flag = true;
    return out;
}

inline std::vector<double> elementary_symmetric(const std::vector<double>& xs) {
    std::vector<double> e(xs.size() + 1, 0.0);
    e[0] = 1.0;
    for (double x : xs)
        for (std::size_t k = std::min(e.size() - 1, xs.size()); k >= 1; --k)
            e[k] += x * e[k - 1];
    return e;
}

// Jacobian of the elementary symmetric map: row k, column j holds
// e_{k-1} of the other variables; its determinant is the Vandermonde
// product of pairwise differences.
inline Eigen::MatrixXd elementary_symmetric_jacobian(const std::vector<double>& xs) {
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd jac(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> rest;
        for (int i = 0; i < n; ++i)
            if (i != j) rest.push_back(xs[i]);
        const auto e = elementary_symmetric(rest);
        for (int k = 0; k < n; ++k) jac(k, j) = k < static_cast<int>(e.size()) ? e[k] : 0.0;
    }
    return jac;
}

// The permutation orbit of the mean multiset is the full solution set of
// the per-path system, so it can be handed to the matcher unchanged.
inline SolutionSet expmean_solution_set(const ExpMeanSolution& solution, int n_links) {
    SolutionSet sols;
    sols.free_stages = 1;
    sols.n_blocks = n_links;
    std::vector<int> idx(n_links);
    for (int i = 0; i < n_links; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end());
    do {
        EPSRoot r;
        r.x.resize(n_links);
        for (int i = 0; i < n_links; ++i) r.x(i) = solution.means[idx[i]];
        double det = 1.0;
        for (int i = 0; i < n_links; ++i)
            for (int j = i + 1; j < n_links; ++j) det *= std::abs(r.x(i) - r.x(j));
        r.jacobian_det = Complex(det, 0.0);
        sols.roots.push_back(std::move(r));
    } while (std::next_permutation(idx.begin(), idx.end()));
    auto fb = first_block_set(sols, 1e-9);
    sols.representatives = std::move(fb.representatives);
    sols.representative_ambiguous = fb.ambiguous;
    return sols;
}

}  // namespace gnt
