#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <thread>
#include <vector>

#include "gnt/eps.hpp"
#include "gnt/errors.hpp"
#include "gnt/rng.hpp"

namespace gnt {

struct SolveSettings {
    std::uint64_t seed = 0x5eedULL;
    double max_step = 0.1;
    double min_step = 1e-6;
    double track_tol = 1e-10;
    int corrector_iters = 3;
    int max_steps = 20000;
    double endpoint_tol = 1e-12;
    double residual_tol = 1e-8;   // accept: max|E(x)-u| <= residual_tol * (1 + |u|)
    double merge_tol = 1e-8;      // endpoint clustering
    double closure_tol = 1e-6;    // block-permutation closure matching
    double dedup_tol = 1e-6;      // first-block representative clustering
    double blowup = 1e8;
    int retries = 3;
    int threads = 0;              // 0 = hardware concurrency
    std::uint64_t total_degree_cap = 4096;
};

struct EPSRoot {
    Eigen::VectorXcd x;
    double residual = 0.0;
    Complex jacobian_det{0.0, 0.0};
    int multiplicity = 1;
    bool symmetry_completed = false;  // recovered by block permutation, not tracking
};

struct SolutionSet {
    int free_stages = 0;
    int n_blocks = 0;
    std::vector<EPSRoot> roots;
    std::vector<Eigen::VectorXcd> representatives;  // deduplicated first blocks
    bool representative_ambiguous = false;
    int at_infinity = 0;     // divergent start points (expected: Bezout excess)
    int failed_paths = 0;    // stalled after the retry budget
    std::vector<Eigen::VectorXcd> quarantined;  // endpoints that would not polish
    bool permutation_closed = true;
};

namespace solver_detail {

struct CompiledPoly {
    struct Term {
        double c;
        Monomial e;
    };
    std::vector<Term> terms;

    static CompiledPoly from(const MultiPoly<double>& p) {
        CompiledPoly out;
        out.terms.reserve(p.terms.size());
        for (const auto& [mono, c] : p.terms) out.terms.push_back({c, mono});
        return out;
    }

    Complex eval(const Eigen::VectorXcd& x) const {
        Complex acc(0.0, 0.0);
        for (const auto& t : terms) {
            Complex v(t.c, 0.0);
            for (std::size_t i = 0; i < t.e.size(); ++i)
                for (int rep = 0; rep < t.e[i]; ++rep) v *= x(static_cast<int>(i));
            acc += v;
        }
        return acc;
    }
};

struct CompiledSystem {
    int n = 0;
    std::vector<CompiledPoly> f;                    // E_i(x) - u_i
    std::vector<std::vector<CompiledPoly>> jac;     // jac[i][v]
    std::vector<int> degrees;

    static CompiledSystem from(const EPSInstance& inst) {
        CompiledSystem sys;
        sys.n = inst.dims();
        sys.f.reserve(sys.n);
        sys.jac.resize(sys.n);
        sys.degrees.resize(sys.n);
        for (int i = 0; i < sys.n; ++i) {
            MultiPoly<double> p = inst.components_dbl[i];
            p.add_term(Monomial(sys.n, 0), -inst.target(i));
            sys.f.push_back(CompiledPoly::from(p));
            sys.degrees[i] = std::max(1, p.total_degree());
            sys.jac[i].reserve(sys.n);
            for (int v = 0; v < sys.n; ++v)
                sys.jac[i].push_back(CompiledPoly::from(inst.components_dbl[i].partial(v)));
        }
        return sys;
    }

    Eigen::VectorXcd eval(const Eigen::VectorXcd& x) const {
        Eigen::VectorXcd out(n);
        for (int i = 0; i < n; ++i) out(i) = f[i].eval(x);
        return out;
    }

    Eigen::MatrixXcd jacobian(const Eigen::VectorXcd& x) const {
        Eigen::MatrixXcd out(n, n);
        for (int i = 0; i < n; ++i)
            for (int v = 0; v < n; ++v) out(i, v) = jac[i][v].eval(x);
        return out;
    }
};

enum class PathStatus { converged, at_infinity, stalled };

struct PathOutcome {
    PathStatus status = PathStatus::stalled;
    Eigen::VectorXcd x;
};

// Start system component g_i = x_i^{deg_i} - 1 and its derivative.
inline Complex start_eval(const Eigen::VectorXcd& x, int i, int deg) {
    Complex v(1.0, 0.0);
    for (int r = 0; r < deg; ++r) v *= x(i);
    return v - 1.0;
}

inline Complex start_deriv(const Eigen::VectorXcd& x, int i, int deg) {
    Complex v(static_cast<double>(deg), 0.0);
    for (int r = 0; r < deg - 1; ++r) v *= x(i);
    return v;
}

// Convex homotopy with a random complex constant; Euler predictor and a
// short Newton corrector with step halving.
inline PathOutcome track_path(const CompiledSystem& sys, const Eigen::VectorXcd& start,
                              Complex gamma, const SolveSettings& s) {
    const int n = sys.n;
    Eigen::VectorXcd x = start;
    double t = 0.0;
    double dt = s.max_step * 0.5;
    int steps = 0;

    auto h_eval = [&](const Eigen::VectorXcd& p, double tt) {
        Eigen::VectorXcd h = sys.eval(p) * tt;
        for (int i = 0; i < n; ++i) h(i) += (1.0 - tt) * gamma * start_eval(p, i, sys.degrees[i]);
        return h;
    };
    auto h_jac = [&](const Eigen::VectorXcd& p, double tt) {
        Eigen::MatrixXcd j = sys.jacobian(p) * tt;
        for (int i = 0; i < n; ++i) j(i, i) += (1.0 - tt) * gamma * start_deriv(p, i, sys.degrees[i]);
        return j;
    };

    while (t < 1.0) {
        if (++steps > s.max_steps) return {PathStatus::stalled, x};
        dt = std::min(dt, 1.0 - t);
        // predictor
        Eigen::VectorXcd ht = sys.eval(x);
        for (int i = 0; i < n; ++i) ht(i) -= gamma * start_eval(x, i, sys.degrees[i]);
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(h_jac(x, t));
        Eigen::VectorXcd xp = x - lu.solve(ht) * dt;
        const double tp = t + dt;
        // corrector
        bool ok = false;
        double prev_step = std::numeric_limits<double>::infinity();
        for (int it = 0; it < s.corrector_iters; ++it) {
            Eigen::VectorXcd delta = Eigen::PartialPivLU<Eigen::MatrixXcd>(h_jac(xp, tp))
                                         .solve(h_eval(xp, tp));
            if (!delta.allFinite()) break;
            xp -= delta;
            const double step = delta.norm();
            if (step <= s.track_tol * (1.0 + xp.norm())) {
                ok = true;
                break;
            }
            if (step > 2.0 * prev_step) break;  // diverging
            prev_step = step;
        }
        if (ok && xp.allFinite()) {
            x = xp;
            t = tp;
            dt = std::min(dt * 1.5, s.max_step);
        } else {
            dt *= 0.5;
            if (dt < s.min_step) {
                if (x.lpNorm<Eigen::Infinity>() > 1e4) return {PathStatus::at_infinity, x};
                return {PathStatus::stalled, x};
            }
        }
        if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > s.blowup)
            return {PathStatus::at_infinity, x};
    }
    return {PathStatus::converged, x};
}

// Newton on the target system; used for endpoint sharpening and for
// polishing permuted copies.
inline bool polish(const CompiledSystem& sys, Eigen::VectorXcd& x, double tol, int iters = 60) {
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXcd delta =
            Eigen::PartialPivLU<Eigen::MatrixXcd>(sys.jacobian(x)).solve(sys.eval(x));
        if (!delta.allFinite()) return false;
        x -= delta;
        if (!x.allFinite()) return false;
        if (delta.norm() <= tol * (1.0 + x.norm())) return true;
    }
    return false;
}

inline std::vector<std::vector<int>> all_permutations(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

inline Eigen::VectorXcd permute_blocks(const Eigen::VectorXcd& x, const std::vector<int>& perm,
                                       int block) {
    Eigen::VectorXcd out(x.size());
    for (std::size_t j = 0; j < perm.size(); ++j)
        out.segment(static_cast<int>(j) * block, block) =
            x.segment(perm[j] * block, block);
    return out;
}

}  // namespace solver_detail

struct FirstBlockResult {
    std::vector<Eigen::VectorXcd> representatives;
    bool ambiguous = false;  // two clusters closer than twice the tolerance
};

// Deduplicated first blocks of the roots under tolerance clustering.
inline FirstBlockResult first_block_set(const SolutionSet& sols, double dedup_tol) {
    if (sols.roots.empty()) throw validation_error("first_block_set: empty solution set");
    const int d = sols.free_stages;
    std::vector<Eigen::VectorXcd> blocks;
    blocks.reserve(sols.roots.size());
    for (const auto& r : sols.roots) blocks.push_back(r.x.head(d));

    std::vector<int> cluster(blocks.size(), -1);
    std::vector<Eigen::VectorXcd> centroids;
    std::vector<int> sizes;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        int found = -1;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            if ((blocks[i] - centroids[c] * (1.0 / sizes[c])).norm() <= dedup_tol) {
                found = static_cast<int>(c);
                break;
            }
        }
        if (found < 0) {
            centroids.push_back(blocks[i]);
            sizes.push_back(1);
        } else {
            centroids[found] += blocks[i];
            ++sizes[found];
        }
    }
    FirstBlockResult out;
    for (std::size_t c = 0; c < centroids.size(); ++c)
        out.representatives.push_back(centroids[c] / static_cast<double>(sizes[c]));
    for (std::size_t a = 0; a < out.representatives.size(); ++a)
        for (std::size_t b = a + 1; b < out.representatives.size(); ++b)
            if ((out.representatives[a] - out.representatives[b]).norm() < 2.0 * dedup_tol)
                out.ambiguous = true;
    std::sort(out.representatives.begin(), out.representatives.end(),
              [](const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
                  for (int i = 0; i < a.size(); ++i) {
                      if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
                      if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
                  }
                  return false;
              });
    return out;
}

// All isolated complex roots by total-degree continuation. Start points are
// products of roots of unity; stalled paths are re-tracked with a fresh
// constant; endpoints are Newton-sharpened, residual-checked, merged, and
// finally closed under block permutation (a permuted root is again a root,
// so a missing orbit member is polished in rather than dropped).
inline SolutionSet solve_square_system(const EPSInstance& inst, const SolveSettings& s = {}) {
    using namespace solver_detail;
    inst.basis.validate();
    const int n = inst.dims();
    const int d = inst.basis.free_stages();

    SolutionSet sols;
    sols.free_stages = d;
    sols.n_blocks = inst.n_blocks;

    // One block: the component table is the identity map, a linear system.
    if (inst.n_blocks == 1) {
        EPSRoot r;
        r.x = inst.target.cast<Complex>();
        r.residual = 0.0;
        r.jacobian_det = Complex(1.0, 0.0);
        sols.roots.push_back(std::move(r));
        auto fb = first_block_set(sols, s.dedup_tol);
        sols.representatives = std::move(fb.representatives);
        return sols;
    }

    const CompiledSystem sys = CompiledSystem::from(inst);
    std::uint64_t total_degree = 1;
    for (int i = 0; i < n; ++i) {
        total_degree *= static_cast<std::uint64_t>(sys.degrees[i]);
        if (total_degree > s.total_degree_cap)
            throw numeric_error("solve_square_system: total degree exceeds cap " +
                                std::to_string(s.total_degree_cap));
    }

    // Start roots: mixed-radix enumeration of roots of unity per coordinate.
    auto start_point = [&](std::uint64_t idx) {
        Eigen::VectorXcd x(n);
        for (int i = 0; i < n; ++i) {
            const int deg = sys.degrees[i];
            const int k = static_cast<int>(idx % deg);
            idx /= deg;
            const double ang = 2.0 * M_PI * k / deg;
            x(i) = Complex(std::cos(ang), std::sin(ang));
        }
        return x;
    };

    // One shared constant for the base sweep keeps the start-point-to-root
    // correspondence bijective; only retries of stalled paths redraw it.
    SubstreamRng gamma_rng(s.seed, 0x67616d);
    const double base_ang = gamma_rng.next_double(0.0, 2.0 * M_PI);
    const Complex base_gamma(std::cos(base_ang), std::sin(base_ang));

    std::vector<PathOutcome> outcomes(total_degree);
    std::atomic<std::uint64_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::uint64_t idx = next.fetch_add(1);
            if (idx >= total_degree) return;
            PathOutcome out = track_path(sys, start_point(idx), base_gamma, s);
            for (int attempt = 1; attempt <= s.retries && out.status == PathStatus::stalled;
                 ++attempt) {
                SubstreamRng rng(s.seed, 0x67616d, idx, attempt);
                const double ang = rng.next_double(0.0, 2.0 * M_PI);
                out = track_path(sys, start_point(idx), Complex(std::cos(ang), std::sin(ang)), s);
            }
            outcomes[idx] = std::move(out);
        }
    };
    int threads = s.threads > 0 ? s.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(total_degree)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    const double residual_gate = s.residual_tol * (1.0 + inst.target.lpNorm<Eigen::Infinity>());
    std::vector<Eigen::VectorXcd> accepted;
    for (auto& out : outcomes) {
        switch (out.status) {
            case PathStatus::at_infinity:
                ++sols.at_infinity;
                break;
            case PathStatus::stalled:
                ++sols.failed_paths;
                sols.quarantined.push_back(out.x);
                break;
            case PathStatus::converged: {
                Eigen::VectorXcd x = out.x;
                if (!polish(sys, x, s.endpoint_tol)) {
                    sols.quarantined.push_back(out.x);
                    break;
                }
                if (sys.eval(x).lpNorm<Eigen::Infinity>() > residual_gate) {
                    sols.quarantined.push_back(x);
                    break;
                }
                accepted.push_back(std::move(x));
                break;
            }
        }
    }

    // Merge endpoint clusters; coincident endpoints flag a multiplicity.
    std::vector<EPSRoot> roots;
    for (auto& x : accepted) {
        bool merged = false;
        for (auto& r : roots) {
            if ((r.x - x).lpNorm<Eigen::Infinity>() <= s.merge_tol) {
                ++r.multiplicity;
                merged = true;
                break;
            }
        }
        if (!merged) {
            EPSRoot r;
            r.x = std::move(x);
            roots.push_back(std::move(r));
        }
    }

    // Close under block permutation.
    const auto perms = all_permutations(inst.n_blocks);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        for (const auto& perm : perms) {
            const Eigen::VectorXcd px = permute_blocks(roots[i].x, perm, d);
            bool present = false;
            for (const auto& r : roots)
                if ((r.x - px).lpNorm<Eigen::Infinity>() <= s.closure_tol) {
                    present = true;
                    break;
                }
            if (present) continue;
            Eigen::VectorXcd candidate = px;
            if (polish(sys, candidate, s.endpoint_tol) &&
                sys.eval(candidate).lpNorm<Eigen::Infinity>() <= residual_gate) {
                EPSRoot r;
                r.x = std::move(candidate);
                r.symmetry_completed = true;
                roots.push_back(std::move(r));
            } else {
                sols.permutation_closed = false;
            }
        }
    }

    for (auto& r : roots) {
        r.residual = sys.eval(r.x).lpNorm<Eigen::Infinity>();
        r.jacobian_det = sys.jacobian(r.x).determinant();
    }
    std::sort(roots.begin(), roots.end(), [](const EPSRoot& a, const EPSRoot& b) {
        for (int i = 0; i < a.x.size(); ++i) {
            if (a.x(i).real() != b.x(i).real()) return a.x(i).real() < b.x(i).real();
            if (a.x(i).imag() != b.x(i).imag()) return a.x(i).imag() < b.x(i).imag();
        }
        return false;
    });
    sols.roots = std::move(roots);

    if (!sols.roots.empty()) {
        auto fb = first_block_set(sols, s.dedup_tol);
        sols.representatives = std::move(fb.representatives);
        sols.representative_ambiguous = fb.ambiguous;
    }
    return sols;
}

}  // namespace gnt
