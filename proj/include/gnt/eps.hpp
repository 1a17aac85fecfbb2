#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/polynomial.hpp"
#include "gnt/rational.hpp"
#include "gnt/rng.hpp"

namespace gnt {

using Complex = std::complex<double>;

// Shared exponential rate basis. The last rate is the pivot: the stage whose
// weight is eliminated through the weights-sum-to-one substitution, so every
// kernel and coefficient below is expressed relative to it.
struct ExpBasis {
    std::vector<double> rates;

    int free_stages() const { return static_cast<int>(rates.size()) - 1; }
    double pivot() const { return rates.back(); }

    void validate() const {
        if (rates.size() < 2) throw validation_error("basis needs at least two rates");
        for (double r : rates)
            if (!(r > 0.0)) throw validation_error("basis rates must be strictly positive");
        for (std::size_t i = 0; i < rates.size(); ++i)
            for (std::size_t j = i + 1; j < rates.size(); ++j)
                if (rates[i] == rates[j]) throw validation_error("basis rates must be distinct");
    }

    Rational exact_rate(int k) const { return rational_from_double(rates[k]); }
};

// Lambda_k(t) = (lambda_k - pivot) t / (lambda_k + t); stages are 0-based.
inline double lambda_fn(const ExpBasis& basis, int k, double t) {
    return (basis.rates[k] - basis.pivot()) * t / (basis.rates[k] + t);
}

inline Rational beta_exact(const ExpBasis& basis, int j, int k) {
    if (j == k) return Rational(1);
    const Rational lj = basis.exact_rate(j), lk = basis.exact_rate(k),
                   lp = rational_from_double(basis.pivot());
    return lj * (lk - lp) / (lj - lk);
}

inline double beta(const ExpBasis& basis, int j, int k) { return to_double(beta_exact(basis, j, k)); }

// Expansion coefficient for rewriting a kernel product prod_k Lambda_k^{w_k}
// as a linear combination of pure kernel powers. Exact over the rationals.
inline Rational gamma_exact(const ExpBasis& basis, int k, int q, const std::vector<int>& omega) {
    const int d = basis.free_stages();
    if (static_cast<int>(omega.size()) != d) throw validation_error("gamma: omega size mismatch");
    std::vector<int> support;
    for (int r = 0; r < d; ++r)
        if (omega[r] > 0) support.push_back(r);
    if (support.empty() || !std::binary_search(support.begin(), support.end(), k))
        throw validation_error("gamma: stage has zero multiplicity");
    if (q < 1 || q > omega[k]) throw validation_error("gamma: power out of range");

    Rational prefactor(1);
    for (int r : support) prefactor *= rational_pow(beta_exact(basis, k, r), omega[r]);

    std::vector<int> rest;
    for (int r : support)
        if (r != k) rest.push_back(r);

    Rational sum(0);
    for (const auto& s : compositions(omega[k] - q, static_cast<int>(rest.size()))) {
        Rational term(1);
        for (std::size_t idx = 0; idx < rest.size(); ++idx) {
            const int r = rest[idx], sr = s[idx];
            term *= Rational(binomial(omega[r] + sr - 1, omega[r] - 1));
            term *= rational_pow(beta_exact(basis, r, k), sr);
        }
        sum += term;
    }
    return prefactor * sum;
}

// |prod Lambda^omega - sum gamma * Lambda^q| relative to the product's size.
inline double expansion_residual(const ExpBasis& basis, const std::vector<int>& omega, double t) {
    const int d = basis.free_stages();
    double lhs = 1.0;
    bool any = false;
    for (int k = 0; k < d; ++k) {
        if (omega[k] == 0) continue;
        any = true;
        lhs *= std::pow(lambda_fn(basis, k, t), omega[k]);
    }
    if (!any) throw validation_error("expansion_residual: omega must have a nonzero entry");
    double rhs = 0.0;
    for (int k = 0; k < d; ++k) {
        if (omega[k] == 0) continue;
        for (int q = 1; q <= omega[k]; ++q)
            rhs += to_double(gamma_exact(basis, k, q, omega)) * std::pow(lambda_fn(basis, k, t), q);
    }
    return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

// Sum over all stage assignments of a given type: one monomial per distinct
// arrangement, coefficient one. Variables are indexed block-major, var =
// block * free_stages + stage; a block assigned the pivot contributes no
// variable. Enumerated by multiset permutation, so the assignment list is
// never stored.
inline MultiPoly<Rational> g_poly(const std::vector<int>& type, int n_blocks) {
    const int dp1 = static_cast<int>(type.size());
    const int d = dp1 - 1;
    if (std::accumulate(type.begin(), type.end(), 0) != n_blocks)
        throw validation_error("g_poly: type must sum to the block count");
    std::vector<int> assignment;
    assignment.reserve(n_blocks);
    for (int s = 0; s < dp1; ++s) assignment.insert(assignment.end(), type[s], s);

    MultiPoly<Rational> out(n_blocks * d);
    do {
        Monomial mono(n_blocks * d, 0);
        for (int j = 0; j < n_blocks; ++j)
            if (assignment[j] != d) ++mono[j * d + assignment[j]];
        out.add_term(mono, Rational(1));
    } while (std::next_permutation(assignment.begin(), assignment.end()));
    return out;
}

// Component polynomial of the elementary map: the collected coefficient of
// Lambda_k^q * pivot^{n_blocks - q} in the expanded product form. Block-
// permutation symmetric with exact rational coefficients.
inline MultiPoly<Rational> h_poly(const ExpBasis& basis, int n_blocks, int k, int q) {
    const int d = basis.free_stages();
    if (k < 0 || k >= d || q < 1 || q > n_blocks) throw validation_error("h_poly: index out of range");
    const Rational pivot = rational_from_double(basis.pivot());
    MultiPoly<Rational> out(n_blocks * d);
    for (const auto& type : compositions(n_blocks, d + 1)) {
        if (type[k] < q) continue;
        std::vector<int> omega(type.begin(), type.end() - 1);
        const long scale_pow = static_cast<long>(n_blocks) - q - type[d];
        const Rational coeff = gamma_exact(basis, k, q, omega) / rational_pow(pivot, scale_pow);
        out += g_poly(type, n_blocks).scaled(coeff);
    }
    return out;
}

// E = (h_{1,1..N}, ..., h_{d,1..N}) flattened with component index
// k * n_blocks + (q - 1).
inline std::vector<MultiPoly<Rational>> build_elementary_map(const ExpBasis& basis, int n_blocks) {
    const int d = basis.free_stages();
    std::vector<MultiPoly<Rational>> e;
    e.reserve(static_cast<std::size_t>(d) * n_blocks);
    for (int k = 0; k < d; ++k)
        for (int q = 1; q <= n_blocks; ++q) e.push_back(h_poly(basis, n_blocks, k, q));
    return e;
}

// Evaluation matrix of the kernel powers at the grid; column c pairs with
// component c of the elementary map.
inline Eigen::MatrixXd build_T(const ExpBasis& basis, const std::vector<double>& tau, int n_blocks) {
    const int d = basis.free_stages();
    const int n = d * n_blocks;
    if (static_cast<int>(tau.size()) != n)
        throw validation_error("build_T: need exactly d * n_blocks grid points");
    Eigen::MatrixXd t_mat(n, n);
    for (int j = 0; j < n; ++j) {
        for (int c = 0; c < n; ++c) {
            const int stage = c / n_blocks;
            const int q = c % n_blocks + 1;
            t_mat(j, c) = std::pow(lambda_fn(basis, stage, tau[j]), q) *
                          std::pow(basis.pivot(), n_blocks - q);
        }
    }
    return t_mat;
}

inline double condition_number(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / sv(sv.size() - 1);
}

struct TauPolicy {
    double lo_factor = 0.4;   // lower end: lo_factor * min rate
    double hi_factor = 0.4;   // upper end: hi_factor * max rate
    double jitter = 0.05;     // multiplicative jitter amplitude
    double cond_cap = 1e10;   // redraw while cond(T) exceeds this
    int max_redraws = 64;
};

// Log-spaced grid with seeded jitter, redrawn until the evaluation matrix is
// acceptably conditioned (the grid placement governs how measurement noise
// is amplified through the linear solve). Keeps the best draw seen.
inline std::vector<double> default_tau(const ExpBasis& basis, int n_blocks, std::uint64_t seed,
                                       const TauPolicy& policy = {}) {
    const int count = basis.free_stages() * n_blocks;
    const double lo = policy.lo_factor * *std::min_element(basis.rates.begin(), basis.rates.end());
    const double hi = policy.hi_factor * *std::max_element(basis.rates.begin(), basis.rates.end());
    std::vector<double> best;
    double best_cond = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < policy.max_redraws; ++attempt) {
        SubstreamRng rng(seed, 0x7a75, attempt);
        std::vector<double> tau(count);
        for (int i = 0; i < count; ++i) {
            const double frac = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
            const double base = lo * std::pow(hi / lo, frac);
            tau[i] = base * (1.0 + policy.jitter * rng.next_double(-1.0, 1.0));
        }
        std::sort(tau.begin(), tau.end());
        bool distinct = true;
        for (int i = 1; i < count; ++i)
            if (tau[i] <= tau[i - 1]) distinct = false;
        if (!distinct) continue;
        const double cond = condition_number(build_T(basis, tau, n_blocks));
        if (cond < best_cond) {
            best_cond = cond;
            best = tau;
        }
        if (cond <= policy.cond_cap) return tau;
    }
    if (best.empty()) throw numeric_error("default_tau: failed to draw a usable grid");
    if (best_cond > policy.cond_cap)
        throw numeric_error("default_tau: conditioning cap exhausted; best cond " +
                            std::to_string(best_cond));
    return best;
}

// One path's square polynomial system E(x) = u. The component table depends
// only on (basis, block count); the grid and measurements enter solely
// through the target vector.
struct EPSInstance {
    ExpBasis basis;
    int n_blocks = 0;
    int path_id = -1;
    std::vector<MultiPoly<Rational>> components;  // exact table
    std::vector<MultiPoly<double>> components_dbl;
    std::vector<double> tau;     // kept for replay only
    Eigen::VectorXd target;      // u

    int dims() const { return basis.free_stages() * n_blocks; }

    Eigen::VectorXcd eval(const Eigen::VectorXcd& x) const {
        std::vector<Complex> xs(x.data(), x.data() + x.size());
        Eigen::VectorXcd out(dims());
        for (int i = 0; i < dims(); ++i) out(i) = components_dbl[i].eval(xs);
        return out;
    }

    Eigen::VectorXcd residual(const Eigen::VectorXcd& x) const {
        Eigen::VectorXcd r = eval(x);
        for (int i = 0; i < dims(); ++i) r(i) -= target(i);
        return r;
    }
};

inline EPSInstance assemble_eps(const ExpBasis& basis, int n_blocks, const std::vector<double>& tau,
                                const std::vector<double>& c_hat) {
    basis.validate();
    if (c_hat.size() != tau.size()) throw validation_error("assemble_eps: grid/target size mismatch");
    EPSInstance inst;
    inst.basis = basis;
    inst.n_blocks = n_blocks;
    inst.tau = tau;
    inst.components = build_elementary_map(basis, n_blocks);
    inst.components_dbl.reserve(inst.components.size());
    for (const auto& p : inst.components) inst.components_dbl.push_back(to_double_poly(p));

    const Eigen::MatrixXd t_mat = build_T(basis, tau, n_blocks);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(t_mat);
    if (!lu.isInvertible())
        throw numeric_error("assemble_eps: evaluation matrix is singular to working precision");
    Eigen::VectorXd c(static_cast<int>(c_hat.size()));
    for (std::size_t i = 0; i < c_hat.size(); ++i) c(static_cast<int>(i)) = c_hat[i];
    inst.target = lu.solve(c);
    return inst;
}

// Exact partial derivatives of the component table, evaluated at x.
// Columns follow the natural variable order (block-major).
inline Eigen::MatrixXcd eps_jacobian(const EPSInstance& inst, const Eigen::VectorXcd& x) {
    const int n = inst.dims();
    std::vector<Complex> xs(x.data(), x.data() + x.size());
    Eigen::MatrixXcd jac(n, n);
    for (int e = 0; e < n; ++e)
        for (int v = 0; v < n; ++v) jac(e, v) = inst.components_dbl[e].partial(v).eval(xs);
    return jac;
}

// Same Jacobian with columns regrouped stage-major, i.e. column (k, j)
// differentiates by x_{jk}. The block-constant determinant closed form
// prod_{j1<j2} (a_{j1} - a_{j2})^d holds in this ordering; the block-major
// ordering differs from it by the sign of the grouping permutation.
inline Eigen::MatrixXcd eps_jacobian_stage_major(const EPSInstance& inst,
                                                 const Eigen::VectorXcd& x) {
    const Eigen::MatrixXcd jac = eps_jacobian(inst, x);
    const int d = inst.basis.free_stages();
    const int n_blocks = inst.n_blocks;
    Eigen::MatrixXcd out(jac.rows(), jac.cols());
    for (int k = 0; k < d; ++k)
        for (int j = 0; j < n_blocks; ++j) out.col(k * n_blocks + j) = jac.col(j * d + k);
    return out;
}

// Product representation prod_j (sum_k x_{jk} Lambda_k(t) + pivot); the
// independent route against the collected component table.
template <typename T>
inline T eval_product_form(const ExpBasis& basis, int n_blocks, const std::vector<T>& x, double t) {
    const int d = basis.free_stages();
    T prod(1);
    for (int j = 0; j < n_blocks; ++j) {
        T factor(basis.pivot());
        for (int k = 0; k < d; ++k) factor += x[j * d + k] * T(lambda_fn(basis, k, t));
        prod *= factor;
    }
    return prod;
}

// Same evaluation through the component table: pivot^n + sum h_kq L_k^q p^{n-q}.
template <typename T>
inline T eval_component_form(const EPSInstance& inst, const std::vector<T>& x, double t) {
    const int d = inst.basis.free_stages();
    const int n = inst.n_blocks;
    T acc(std::pow(inst.basis.pivot(), n));
    for (int k = 0; k < d; ++k)
        for (int q = 1; q <= n; ++q)
            acc += inst.components_dbl[k * n + q - 1].eval(x) *
                   T(std::pow(lambda_fn(inst.basis, k, t), q) * std::pow(inst.basis.pivot(), n - q));
    return acc;
}

namespace det_detail {
using BigFloat = boost::multiprecision::cpp_bin_float_50;
}  // namespace det_detail

struct DetWResult {
    double closed_form = 0.0;
    double numeric = 0.0;
};

// Block matrix of inverse-power columns 1/(lambda_i + t_j)^p, p descending
// from omega_i to 1 within block i. The closed form factors into rate gaps,
// grid gaps and row scalings; the numeric value is an elimination in
// extended precision so the comparison tests the formula, not double LU.
inline DetWResult closed_form_det_W(const std::vector<int>& omegas,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& ts) {
    using det_detail::BigFloat;
    const int d = static_cast<int>(omegas.size());
    if (static_cast<int>(lambdas.size()) != d) throw validation_error("det_W: rate count mismatch");
    const int size = std::accumulate(omegas.begin(), omegas.end(), 0);
    if (static_cast<int>(ts.size()) != size) throw validation_error("det_W: grid count mismatch");

    std::vector<std::vector<BigFloat>> w(size, std::vector<BigFloat>(size));
    for (int j = 0; j < size; ++j) {
        int col = 0;
        for (int i = 0; i < d; ++i) {
            for (int p = omegas[i]; p >= 1; --p) {
                w[j][col++] = 1 / pow(BigFloat(lambdas[i]) + BigFloat(ts[j]), p);
            }
        }
    }

    // Elimination with partial pivoting in 50-digit floats.
    BigFloat det = 1;
    for (int c = 0; c < size; ++c) {
        int pivot = c;
        for (int r = c + 1; r < size; ++r)
            if (abs(w[r][c]) > abs(w[pivot][c])) pivot = r;
        if (w[pivot][c] == 0) { det = 0; break; }
        if (pivot != c) {
            std::swap(w[pivot], w[c]);
            det = -det;
        }
        det *= w[c][c];
        for (int r = c + 1; r < size; ++r) {
            const BigFloat f = w[r][c] / w[c][c];
            for (int cc = c; cc < size; ++cc) w[r][cc] -= f * w[c][cc];
        }
    }

    BigFloat closed = 1;
    for (int i1 = 0; i1 < d; ++i1)
        for (int i2 = i1 + 1; i2 < d; ++i2)
            closed *= pow(BigFloat(lambdas[i2]) - BigFloat(lambdas[i1]),
                          omegas[i1] * omegas[i2]);
    for (int j = 0; j < size; ++j)
        for (int i = 0; i < d; ++i)
            closed /= pow(BigFloat(lambdas[i]) + BigFloat(ts[j]), omegas[i]);
    for (int j1 = 0; j1 < size; ++j1)
        for (int j2 = j1 + 1; j2 < size; ++j2)
            closed *= BigFloat(ts[j2]) - BigFloat(ts[j1]);

    DetWResult out;
    out.closed_form = closed.convert_to<double>();
    out.numeric = det.convert_to<double>();
    return out;
}

}  // namespace gnt
