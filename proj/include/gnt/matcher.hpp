#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/gh.hpp"
#include "gnt/solver.hpp"
#include "gnt/topology.hpp"

namespace gnt {

enum class CandidateMetric {
    complex_norm,  // ||a - b||
    real_part,     // ||Re a - Re b||; estimates of real vectors whose noise
                   // bifurcated a close pair into conjugates still associate
};

inline double candidate_distance(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b,
                                 CandidateMetric metric) {
    if (metric == CandidateMetric::complex_norm) return (a - b).norm();
    return (a.real() - b.real()).norm();
}

struct EquivalenceClasses {
    double delta = 0.0;
    std::vector<int> class_of;   // per pooled candidate
    int count = 0;
    bool is_equivalence = true;  // every class is a clique of the 2*delta relation
    double worst_diameter = 0.0;
    double min_gap = std::numeric_limits<double>::infinity();

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> out(count);
        for (std::size_t i = 0; i < class_of.size(); ++i)
            out[class_of[i]].push_back(static_cast<int>(i));
        return out;
    }
};

// Single-linkage components of the relation ||a - b|| < 2*delta over the
// pooled candidates. The relation is an equivalence relation exactly when
// every component has diameter below 2*delta (components are separated by
// at least 2*delta by construction); the flag carries that diagnosis and
// the caller decides whether to shrink delta and retry.
inline EquivalenceClasses build_equivalence(const std::vector<Eigen::VectorXcd>& pool, double delta,
                                            CandidateMetric metric = CandidateMetric::complex_norm) {
    if (!(delta > 0.0)) throw validation_error("build_equivalence: delta must be positive");
    const std::size_t n = pool.size();
    std::vector<int> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (candidate_distance(pool[i], pool[j], metric) < 2.0 * delta)
                parent[find(static_cast<int>(i))] = find(static_cast<int>(j));

    EquivalenceClasses out;
    out.delta = delta;
    out.class_of.resize(n);
    std::map<int, int> relabel;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, fresh] = relabel.emplace(find(static_cast<int>(i)), static_cast<int>(relabel.size()));
        out.class_of[i] = it->second;
    }
    out.count = static_cast<int>(relabel.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist = candidate_distance(pool[i], pool[j], metric);
            if (out.class_of[i] == out.class_of[j])
                out.worst_diameter = std::max(out.worst_diameter, dist);
            else
                out.min_gap = std::min(out.min_gap, dist);
        }
    }
    if (out.worst_diameter >= 2.0 * delta) out.is_equivalence = false;
    return out;
}

enum class MatchKind { gh_weights, exp_means };

struct MatchOptions {
    std::optional<double> delta;  // fixed merge radius; otherwise derived from the data
    MatchKind kind = MatchKind::gh_weights;
    ExpBasis basis;               // required for gh_weights completion/validation
    CandidateMetric metric = CandidateMetric::real_part;
    int max_retries = 16;
};

struct LinkAssignment {
    int link = -1;
    Eigen::VectorXcd value;            // assigned free-component vector
    std::vector<double> completed;     // real weights with the pivot weight appended
    std::vector<int> source_paths;
    std::string method;                // intersection | completion | direct | nearest-fallback
    std::string flag;                  // empty when clean
    bool ok = false;
    bool model_valid = false;
    double max_imag = 0.0;
};

struct MatchReport {
    MatchKind kind = MatchKind::gh_weights;
    double delta_used = 0.0;
    bool delta_auto = true;
    bool equivalence_strict = true;   // strict transitivity held at delta_used
    bool assumption_violation = false;
    std::vector<LinkAssignment> links;
    std::vector<std::string> notes;
    std::optional<double> error_norm;
};

namespace match_detail {

struct Pool {
    std::vector<Eigen::VectorXcd> values;
    std::vector<int> path_of;
    std::vector<std::vector<int>> by_path;  // candidate indices per path
};

inline Pool pool_candidates(const std::vector<SolutionSet>& sols) {
    Pool pool;
    pool.by_path.resize(sols.size());
    for (std::size_t i = 0; i < sols.size(); ++i) {
        for (const auto& rep : sols[i].representatives) {
            pool.by_path[i].push_back(static_cast<int>(pool.values.size()));
            pool.values.push_back(rep);
            pool.path_of.push_back(static_cast<int>(i));
        }
    }
    return pool;
}

// Conjugate twins: a solution set with a real target is closed under
// conjugation, so a bifurcated pair appears as two representatives that are
// conjugates of each other. They estimate the same real vector and are
// exempt from the same-path separation rule.
inline bool conjugate_twins(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    double dist = 0.0, scale = 1.0;
    for (int k = 0; k < a.size(); ++k) {
        dist = std::max(dist, std::abs(a(k) - std::conj(b(k))));
        scale = std::max(scale, std::abs(a(k)));
    }
    const bool has_imag = a.imag().lpNorm<Eigen::Infinity>() > 1e-9;
    return has_imag && dist <= 1e-6 * scale;
}

// The class layout must keep distinct candidates of one path apart: two
// non-twin representatives of one solution set estimate distinct vectors,
// so a class holding both is a wrong merge regardless of diameters.
inline bool same_path_collision(const EquivalenceClasses& classes, const Pool& pool) {
    const auto members = classes.members();
    for (const auto& cls : members) {
        for (std::size_t a = 0; a < cls.size(); ++a) {
            for (std::size_t b = a + 1; b < cls.size(); ++b) {
                if (pool.path_of[cls[a]] != pool.path_of[cls[b]]) continue;
                if (!conjugate_twins(pool.values[cls[a]], pool.values[cls[b]])) return true;
            }
        }
    }
    return false;
}

// Merge radius from the data: the closest cross-path candidates of paths
// sharing a link must merge (they estimate the shared link) while distinct
// candidates of one path must not, so the radius sits between those scales.
inline double derive_delta(const PathLinkMatrix& topo, const Pool& pool, CandidateMetric metric) {
    double required = 0.0;
    bool any_required = false;
    for (int i1 = 0; i1 < topo.path_count(); ++i1) {
        for (int i2 = i1 + 1; i2 < topo.path_count(); ++i2) {
            bool shares = false;
            for (int l : topo.path_links(i1))
                if (topo.entry(i2, l)) { shares = true; break; }
            if (!shares) continue;
            double best = std::numeric_limits<double>::infinity();
            for (int a : pool.by_path[i1])
                for (int b : pool.by_path[i2])
                    best = std::min(best, candidate_distance(pool.values[a], pool.values[b], metric));
            if (std::isfinite(best)) {
                required = std::max(required, best);
                any_required = true;
            }
        }
    }
    double separation = std::numeric_limits<double>::infinity();
    for (const auto& idx : pool.by_path) {
        for (std::size_t a = 0; a < idx.size(); ++a) {
            for (std::size_t b = a + 1; b < idx.size(); ++b) {
                if (conjugate_twins(pool.values[idx[a]], pool.values[idx[b]])) continue;
                separation = std::min(separation,
                                      candidate_distance(pool.values[idx[a]], pool.values[idx[b]], metric));
            }
        }
    }

    double two_delta;
    if (!any_required) {
        two_delta = std::isfinite(separation) ? separation / 4.0 : 1e-6;
    } else if (required < separation) {
        two_delta = std::sqrt(std::max(required, 1e-14) * std::min(separation, 1e6));
    } else {
        two_delta = required * (1.0 + 1e-9);  // overlapping scales; retries may shrink it
    }
    return std::max(two_delta / 2.0, 1e-13);
}

}  // namespace match_detail

// Negative probability mass of a completed weight vector: the integral of
// the density's negative part, zero for a proper distribution and up to
// one for badly spurious candidates. Trapezoid on a log grid.
inline double density_violation(const ExpBasis& basis, const std::vector<double>& weights) {
    GHModel m{basis.rates, weights};
    const double min_rate = *std::min_element(m.rates.begin(), m.rates.end());
    const double lo = 1e-5 / min_rate, hi = 50.0 / min_rate;
    const int grid = 512;
    double mass = 0.0, prev_u = 0.0, prev_f = std::min(0.0, gh_pdf(m, 0.0));
    for (int i = 0; i < grid; ++i) {
        const double u = lo * std::pow(hi / lo, static_cast<double>(i) / (grid - 1));
        const double f = std::min(0.0, gh_pdf(m, u));
        mass += 0.5 * (u - prev_u) * (-(f + prev_f));
        prev_u = u;
        prev_f = f;
    }
    return std::min(1.0, mass);
}

namespace match_detail {

// Joint root selection: pick one root per path and a block-to-link labeling
// such that shared links agree across paths, penalizing labelings whose
// completed models are not proper distributions. Exhaustive over the
// labeled-root options per path, which stay tiny for the topologies this
// pipeline targets.
struct ConsistencyChoice {
    bool feasible = false;
    double score = std::numeric_limits<double>::infinity();
    std::vector<std::vector<Eigen::VectorXcd>> link_values;  // [path] -> per-link-of-path value
};

inline ConsistencyChoice refine_by_consistency(const PathLinkMatrix& topo,
                                               const std::vector<SolutionSet>& sols,
                                               const MatchOptions& opt) {
    ConsistencyChoice out;
    const int m = topo.path_count();
    const int d = sols.front().free_stages;

    // Labeled options per path: root x block permutation.
    struct Option {
        std::vector<Eigen::VectorXcd> value_of_link;  // aligned with path_links order
        double validity_penalty = 0.0;
    };
    std::vector<std::vector<Option>> options(m);
    double combos = 1.0;
    for (int i = 0; i < m; ++i) {
        const auto& links = topo.path_links(i);
        const int nb = sols[i].n_blocks;
        std::vector<int> perm(nb);
        for (const auto& root : sols[i].roots) {
            std::iota(perm.begin(), perm.end(), 0);
            do {
                Option o;
                o.value_of_link.resize(nb);
                for (int b = 0; b < nb; ++b)
                    o.value_of_link[b] = root.x.segment(perm[b] * d, d);
                if (opt.kind == MatchKind::gh_weights) {
                    for (int b = 0; b < nb; ++b) {
                        std::vector<double> completed(d + 1);
                        double sum = 0.0;
                        for (int k = 0; k < d; ++k) {
                            completed[k] = o.value_of_link[b](k).real();
                            sum += completed[k];
                        }
                        completed[d] = 1.0 - sum;
                        o.validity_penalty += density_violation(opt.basis, completed);
                    }
                } else {
                    for (int b = 0; b < nb; ++b)
                        if (o.value_of_link[b](0).real() <= 0.0) o.validity_penalty += 1.0;
                }
                options[i].push_back(std::move(o));
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
        combos *= static_cast<double>(options[i].size());
        (void)links;
    }
    if (combos > 2e5 || combos < 1.0) return out;  // refinement reserved for small joint spaces

    // Positions of each link inside its paths, for the agreement terms.
    std::vector<std::vector<std::pair<int, int>>> occurrences(topo.link_count());
    for (int i = 0; i < m; ++i) {
        const auto& links = topo.path_links(i);
        for (std::size_t b = 0; b < links.size(); ++b)
            occurrences[links[b]].emplace_back(i, static_cast<int>(b));
    }

    const double validity_weight = 0.5;
    std::vector<int> pick(m, 0);
    std::vector<int> best_pick;
    double best = std::numeric_limits<double>::infinity();
    auto rec = [&](auto&& self, int path, double acc) -> void {
        if (acc >= best) return;
        if (path == m) {
            best = acc;
            best_pick = pick;
            return;
        }
        for (std::size_t oi = 0; oi < options[path].size(); ++oi) {
            pick[path] = static_cast<int>(oi);
            double add = validity_weight * options[path][oi].validity_penalty;
            // Agreement with already-picked paths on shared links.
            for (int j = 0; j < topo.link_count(); ++j) {
                const auto& occ = occurrences[j];
                for (std::size_t a = 0; a < occ.size(); ++a) {
                    if (occ[a].first != path) continue;
                    for (std::size_t b2 = 0; b2 < occ.size(); ++b2) {
                        if (occ[b2].first >= path) continue;
                        const auto& va = options[path][oi].value_of_link[occ[a].second];
                        const auto& vb =
                            options[occ[b2].first][pick[occ[b2].first]].value_of_link[occ[b2].second];
                        const double dist = (va.real() - vb.real()).norm();
                        add += dist * dist;
                    }
                }
            }
            self(self, path + 1, acc + add);
        }
    };
    rec(rec, 0, 0.0);
    if (best_pick.empty()) return out;

    out.feasible = true;
    out.score = best;
    out.link_values.resize(m);
    for (int i = 0; i < m; ++i) out.link_values[i] = options[i][best_pick[i]].value_of_link;
    return out;
}

}  // namespace match_detail

// Euclidean norm of the concatenated estimation error over all links and
// all free components.
inline double error_norm(const MatchReport& report, const std::vector<std::vector<double>>& truth) {
    double acc = 0.0;
    for (const auto& link : report.links) {
        const auto& t = truth.at(link.link);
        if (static_cast<int>(t.size()) < link.value.size())
            throw validation_error("error_norm: truth row too short");
        for (int k = 0; k < link.value.size(); ++k)
            acc += std::norm(link.value(k) - Complex(t[k], 0.0));
    }
    return std::sqrt(acc);
}

// Assigns a parameter vector to every link. Links covered by several paths
// get the intersection of their paths' candidate classes minus the classes
// seen on paths avoiding them; singly covered links get the unique value
// completing their path's partially known roots. Candidates stay complex;
// intersection does the filtering and the validity flag marks assignments
// that do not form a proper distribution.
inline MatchReport match_links(const PathLinkMatrix& topo, const std::vector<SolutionSet>& sols,
                               const MatchOptions& opt = {},
                               const std::vector<std::vector<double>>* truth = nullptr) {
    using namespace match_detail;
    if (static_cast<int>(sols.size()) != topo.path_count())
        throw validation_error("match_links: one solution set per path required");
    if (!is_k_identifiable(topo, 1))
        throw validation_error("match_links: matrix is not 1-identifiable");
    for (int i = 0; i < topo.path_count(); ++i) {
        if (sols[i].representatives.empty())
            throw validation_error("match_links: path " + std::to_string(i) +
                                   " has no representatives");
        if (sols[i].n_blocks != static_cast<int>(topo.path_links(i).size()))
            throw validation_error("match_links: solution set block count disagrees with path " +
                                   std::to_string(i));
    }
    const int d = sols.front().free_stages;
    const CandidateMetric metric = opt.metric;

    MatchReport report;
    report.kind = opt.kind;
    Pool pool = pool_candidates(sols);

    double delta = opt.delta.value_or(derive_delta(topo, pool, metric));
    report.delta_auto = !opt.delta.has_value();
    EquivalenceClasses classes = build_equivalence(pool.values, delta, metric);
    for (int retry = 0; retry < opt.max_retries && same_path_collision(classes, pool); ++retry) {
        delta *= 0.5;
        classes = build_equivalence(pool.values, delta, metric);
    }
    if (same_path_collision(classes, pool))
        throw numeric_error("match_links: no merge radius separates same-path candidates");
    report.delta_used = delta;
    report.equivalence_strict = classes.is_equivalence;
    if (!classes.is_equivalence)
        report.notes.push_back("relation not transitive at delta=" + std::to_string(delta) +
                               "; single-linkage classes used");

    const auto members = classes.members();
    std::vector<std::set<int>> classes_of_path(topo.path_count());
    for (std::size_t i = 0; i < pool.values.size(); ++i)
        classes_of_path[pool.path_of[i]].insert(classes.class_of[i]);

    // Class value restricted to given paths: per-path mean (conjugate twins
    // cancel to their common real part), then the average across paths.
    auto class_value = [&](int cls, const std::vector<int>& paths) {
        Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(d);
        int used = 0;
        for (int p : paths) {
            Eigen::VectorXcd per_path = Eigen::VectorXcd::Zero(d);
            int count = 0;
            for (int m : members[cls]) {
                if (pool.path_of[m] == p) {
                    per_path += pool.values[m];
                    ++count;
                }
            }
            if (count > 0) {
                acc += per_path / static_cast<double>(count);
                ++used;
            }
        }
        if (used == 0) throw numeric_error("match_links: class has no member on the given paths");
        return Eigen::VectorXcd(acc / static_cast<double>(used));
    };

    std::vector<LinkAssignment> links(topo.link_count());
    const auto shared = topo.multiply_covered_links();
    std::set<int> shared_set(shared.begin(), shared.end());

    // Stage 1: links on several paths.
    for (int j : shared) {
        LinkAssignment& la = links[j];
        la.link = j;
        const auto& g = topo.paths_with_link(j);
        std::set<int> x = classes_of_path[g.front()];
        for (std::size_t gi = 1; gi < g.size(); ++gi) {
            std::set<int> keep;
            for (int c : x)
                if (classes_of_path[g[gi]].count(c)) keep.insert(c);
            x = std::move(keep);
        }
        std::set<int> forbidden;
        for (int b : topo.paths_without_link(j))
            for (int c : classes_of_path[b]) forbidden.insert(c);
        for (int c : forbidden) x.erase(c);

        if (x.size() == 1) {
            const int cls = *x.begin();
            la.value = class_value(cls, g);
            la.source_paths = g;
            la.method = "intersection";
            la.ok = true;
        } else if (x.size() > 1) {
            report.assumption_violation = true;
            la.flag = "multi-valued intersection (" + std::to_string(x.size()) + " classes)";
            // Prefer the class backed by the most paths, then the tightest.
            int best = -1;
            std::size_t best_paths = 0;
            double best_spread = std::numeric_limits<double>::infinity();
            for (int c : x) {
                std::set<int> paths;
                Eigen::VectorXcd centroid = Eigen::VectorXcd::Zero(d);
                for (int m : members[c]) {
                    paths.insert(pool.path_of[m]);
                    centroid += pool.values[m];
                }
                centroid /= static_cast<double>(members[c].size());
                double spread = 0.0;
                for (int m : members[c])
                    spread += candidate_distance(pool.values[m], centroid, metric);
                if (paths.size() > best_paths ||
                    (paths.size() == best_paths && spread < best_spread)) {
                    best = c;
                    best_paths = paths.size();
                    best_spread = spread;
                }
            }
            la.value = class_value(best, g);
            la.source_paths = g;
            la.method = "intersection";
            la.ok = true;
        } else {
            report.assumption_violation = true;
            la.flag = "empty intersection";
            // Nearest cross-path agreement among candidates whose classes are
            // not excluded by the avoiding paths.
            double best = std::numeric_limits<double>::infinity();
            int ba = -1, bb = -1;
            for (std::size_t gi = 0; gi < g.size(); ++gi) {
                for (std::size_t gj = gi + 1; gj < g.size(); ++gj) {
                    for (int a : pool.by_path[g[gi]]) {
                        if (forbidden.count(classes.class_of[a])) continue;
                        for (int b2 : pool.by_path[g[gj]]) {
                            if (forbidden.count(classes.class_of[b2])) continue;
                            const double dist =
                                candidate_distance(pool.values[a], pool.values[b2], metric);
                            if (dist < best) {
                                best = dist;
                                ba = a;
                                bb = b2;
                            }
                        }
                    }
                }
            }
            if (ba >= 0) {
                la.value = 0.5 * (pool.values[ba] + pool.values[bb]);
                la.source_paths = {pool.path_of[ba], pool.path_of[bb]};
                la.method = "nearest-fallback";
                la.ok = true;
            } else {
                la.method = "intersection";
                la.ok = false;
            }
        }
    }

    // Stage 2: links covered by exactly one path. The other links of that
    // path are multiply covered (otherwise two columns would coincide), so
    // their values are already assigned; the unique root extending them
    // yields the remaining block.
    for (int j = 0; j < topo.link_count(); ++j) {
        if (shared_set.count(j)) continue;
        LinkAssignment& la = links[j];
        la.link = j;
        const int istar = topo.paths_with_link(j).front();
        la.source_paths = {istar};
        const auto& p = topo.path_links(istar);

        if (p.size() == 1) {
            la.value = sols[istar].representatives.front();
            la.method = "direct";
            la.ok = true;
            continue;
        }

        la.method = "completion";
        std::vector<Eigen::VectorXcd> vsub;
        bool have_all = true;
        for (int k : p) {
            if (k == j) continue;
            if (!links[k].ok) {
                have_all = false;
                break;
            }
            vsub.push_back(links[k].value);
        }
        if (!have_all) {
            la.flag = "known-block values unavailable";
            la.ok = false;
            report.assumption_violation = true;
            continue;
        }

        // Greedy assignment of known values to root blocks; the root
        // minimizing the worst match cost donates its leftover block.
        double best_cost = std::numeric_limits<double>::infinity();
        Eigen::VectorXcd best_leftover;
        std::vector<Eigen::VectorXcd> agreeing;
        const int n_blocks = sols[istar].n_blocks;
        for (const auto& root : sols[istar].roots) {
            std::vector<Eigen::VectorXcd> blocks;
            for (int b = 0; b < n_blocks; ++b) blocks.push_back(root.x.segment(b * d, d));
            std::vector<bool> used(blocks.size(), false);
            double cost = 0.0;
            for (const auto& v : vsub) {
                double nearest = std::numeric_limits<double>::infinity();
                int pick = -1;
                for (std::size_t b = 0; b < blocks.size(); ++b) {
                    if (used[b]) continue;
                    const double dist = candidate_distance(blocks[b], v, metric);
                    if (dist < nearest) {
                        nearest = dist;
                        pick = static_cast<int>(b);
                    }
                }
                used[pick] = true;
                cost = std::max(cost, nearest);
            }
            Eigen::VectorXcd leftover;
            for (std::size_t b = 0; b < blocks.size(); ++b)
                if (!used[b]) leftover = blocks[b];
            if (cost < best_cost - 1e-15) {
                best_cost = cost;
                best_leftover = leftover;
                agreeing.clear();
            }
            if (cost <= best_cost + std::max(2.0 * delta, 1e-9)) agreeing.push_back(leftover);
        }
        const double accept_tol = std::max(4.0 * delta, 1e-6);
        // Conjugate-twin roots contribute conjugate leftovers; average them.
        Eigen::VectorXcd mean = Eigen::VectorXcd::Zero(d);
        int count = 0;
        for (const auto& v : agreeing) {
            if (candidate_distance(v, best_leftover, metric) <= std::max(2.0 * delta, 1e-9)) {
                mean += v;
                ++count;
            }
        }
        la.value = count > 0 ? Eigen::VectorXcd(mean / static_cast<double>(count)) : best_leftover;
        la.ok = true;
        if (best_cost > accept_tol) {
            la.flag = "best-effort completion (match cost " + std::to_string(best_cost) + ")";
            report.assumption_violation = true;
        }
    }

    // Complete the eliminated weight and validate.
    auto finalize = [&](std::vector<LinkAssignment>& ls) {
        for (auto& la : ls) {
            if (!la.ok) continue;
            la.max_imag = 0.0;
            for (int k = 0; k < la.value.size(); ++k)
                la.max_imag = std::max(la.max_imag, std::abs(la.value(k).imag()));
            if (opt.kind == MatchKind::gh_weights) {
                la.completed.resize(d + 1);
                double sum = 0.0;
                for (int k = 0; k < d; ++k) {
                    la.completed[k] = la.value(k).real();
                    sum += la.completed[k];
                }
                la.completed[d] = 1.0 - sum;
                GHModel m{opt.basis.rates, la.completed};
                la.model_valid = !gh_validate(m).has_value() && la.max_imag < 1e-6;
            } else {
                la.completed = {la.value(0).real()};
                la.model_valid = la.completed[0] > 0.0 && la.max_imag < 1e-6;
            }
        }
    };
    finalize(links);

    // Consistency check: the values assigned to one path's links must line
    // up with the blocks of some root of that path.
    auto path_inconsistent = [&](int i) {
        const auto& p = topo.path_links(i);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& root : sols[i].roots) {
            std::vector<bool> used(sols[i].n_blocks, false);
            double cost = 0.0;
            for (int link : p) {
                if (!links[link].ok) return true;
                double nearest = std::numeric_limits<double>::infinity();
                int pick = -1;
                for (int b = 0; b < sols[i].n_blocks; ++b) {
                    if (used[b]) continue;
                    const double dist = candidate_distance(
                        Eigen::VectorXcd(root.x.segment(b * d, d)), links[link].value, metric);
                    if (dist < nearest) {
                        nearest = dist;
                        pick = b;
                    }
                }
                used[pick] = true;
                cost = std::max(cost, nearest);
            }
            best = std::min(best, cost);
        }
        return best > std::max(4.0 * delta, 1e-6);
    };

    // Repair: if any assignment is flagged, invalid, or inconsistent with
    // its own path's roots, re-derive every link from the jointly most
    // consistent labeled roots across paths.
    bool needs_repair = false;
    for (const auto& la : links)
        if (!la.ok || !la.flag.empty() || !la.model_valid) needs_repair = true;
    for (int i = 0; i < topo.path_count() && !needs_repair; ++i)
        if (path_inconsistent(i)) needs_repair = true;
    if (needs_repair) {
        const auto choice = refine_by_consistency(topo, sols, opt);
        if (choice.feasible) {
            std::vector<LinkAssignment> repaired(topo.link_count());
            for (int i = 0; i < topo.path_count(); ++i) {
                const auto& p = topo.path_links(i);
                for (std::size_t b = 0; b < p.size(); ++b) {
                    LinkAssignment& la = repaired[p[b]];
                    const auto& v = choice.link_values[i][b];
                    if (la.link < 0) {
                        la.link = p[b];
                        la.value = Eigen::VectorXcd::Zero(d);
                        la.method = "consistency-repair";
                        la.ok = true;
                    }
                    double im = 0.0;
                    for (int k = 0; k < d; ++k) im = std::max(im, std::abs(v(k).imag()));
                    // Average real parts across covering paths; conjugate
                    // bifurcations carry their imaginary size in the flag.
                    la.value += v.real().cast<Complex>();
                    la.max_imag = std::max(la.max_imag, im);
                    la.source_paths.push_back(i);
                }
            }
            for (auto& la : repaired) {
                la.value /= static_cast<double>(la.source_paths.size());
                const double im = la.max_imag;
                la.max_imag = 0.0;
                if (im > 1e-6)
                    la.flag = "conjugate bifurcation (imag " + std::to_string(im) + ")";
            }
            finalize(repaired);
            std::string originally;
            for (const auto& la : links)
                if (!la.flag.empty() || !la.ok)
                    originally += (originally.empty() ? "" : ", ") + std::to_string(la.link + 1);
            report.notes.push_back("consistency repair applied" +
                                   (originally.empty() ? std::string()
                                                       : " (flagged links: " + originally + ")"));
            links = std::move(repaired);
        }
    }

    report.links = std::move(links);
    if (truth) report.error_norm = error_norm(report, *truth);
    return report;
}

}  // namespace gnt
