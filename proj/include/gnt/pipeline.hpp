#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gnt/json_io.hpp"
#include "gnt/mgf.hpp"
#include "gnt/probesim.hpp"

namespace gnt {

namespace fs = std::filesystem;

// One estimation run: topology, measurement mode, model basis, optional
// ground truth, sampling parameters and grid/merge policy overrides.
struct RunConfig {
    int schema_version = 1;
    std::string mode = "gh";  // gh | ideal-gh | expmean | ideal-expmean
    PathLinkMatrix topology;
    ExpBasis basis;                          // gh modes
    std::vector<GHModel> link_models;        // ground truth (simulate / report)
    std::vector<double> link_means;          // expmean ground truth
    std::uint64_t samples_per_path = 1000000;
    std::uint64_t seed = 1;
    std::optional<double> delta;
    std::optional<std::vector<std::vector<double>>> tau_lists;  // per path
    TauPolicy tau_policy;
    fs::path out_dir = "out";

    bool ideal() const { return mode.rfind("ideal-", 0) == 0; }
    bool expmean() const { return mode == "expmean" || mode == "ideal-expmean"; }

    static RunConfig from_json(const json& j);
    json to_json() const;
    void validate() const;
};

inline RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.schema_version = j.at("schema_version").get<int>();
    if (cfg.schema_version != 1)
        throw validation_error("unsupported config schema_version " +
                               std::to_string(cfg.schema_version));
    cfg.mode = j.value("mode", "gh");
    cfg.topology = topology_from_json(j.at("topology"));
    if (j.contains("basis")) cfg.basis.rates = j.at("basis").get<std::vector<double>>();
    if (j.contains("links")) {
        for (const auto& lj : j.at("links")) cfg.link_models.push_back(gh_from_json(lj));
    }
    if (j.contains("link_means")) cfg.link_means = j.at("link_means").get<std::vector<double>>();
    cfg.samples_per_path = j.value("L", cfg.samples_per_path);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("delta") && !j.at("delta").is_null()) cfg.delta = j.at("delta").get<double>();
    if (j.contains("tau") && !j.at("tau").is_null())
        cfg.tau_lists = j.at("tau").get<std::vector<std::vector<double>>>();
    if (j.contains("tau_policy")) {
        const auto& pj = j.at("tau_policy");
        cfg.tau_policy.lo_factor = pj.value("lo_factor", cfg.tau_policy.lo_factor);
        cfg.tau_policy.hi_factor = pj.value("hi_factor", cfg.tau_policy.hi_factor);
        cfg.tau_policy.jitter = pj.value("jitter", cfg.tau_policy.jitter);
        cfg.tau_policy.cond_cap = pj.value("cond_cap", cfg.tau_policy.cond_cap);
        cfg.tau_policy.max_redraws = pj.value("max_redraws", cfg.tau_policy.max_redraws);
    }
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    cfg.validate();
    return cfg;
}

inline json RunConfig::to_json() const {
    json j{{"schema_version", schema_version},
           {"mode", mode},
           {"topology", topology_to_json(topology)},
           {"L", samples_per_path},
           {"seed", seed},
           {"out", out_dir.string()}};
    if (!basis.rates.empty()) j["basis"] = basis.rates;
    if (!link_models.empty()) {
        json links = json::array();
        for (const auto& m : link_models) links.push_back(gh_to_json(m));
        j["links"] = links;
    }
    if (!link_means.empty()) j["link_means"] = link_means;
    if (delta) j["delta"] = *delta;
    if (tau_lists) j["tau"] = *tau_lists;
    return j;
}

inline void RunConfig::validate() const {
    if (mode != "gh" && mode != "ideal-gh" && mode != "expmean" && mode != "ideal-expmean")
        throw validation_error("unknown mode: " + mode);
    if (!expmean()) {
        basis.validate();
        for (const auto& m : link_models) {
            if (m.rates != basis.rates)
                throw validation_error("link model basis differs from the shared basis");
            gh_require_valid(m);
        }
        if (!link_models.empty() &&
            static_cast<int>(link_models.size()) != topology.link_count())
            throw validation_error("need one link model per link");
    } else {
        if (!link_means.empty() &&
            static_cast<int>(link_means.size()) != topology.link_count())
            throw validation_error("need one mean per link");
        for (double m : link_means)
            if (!(m > 0.0)) throw validation_error("link means must be positive");
        for (std::size_t i = 0; i < link_means.size(); ++i)
            for (std::size_t k = i + 1; k < link_means.size(); ++k)
                if (link_means[i] == link_means[k])
                    throw validation_error("link means must be pairwise distinct");
    }
    if (tau_lists && static_cast<int>(tau_lists->size()) != topology.path_count())
        throw validation_error("tau override needs one grid per path");
}

inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const RunConfig& cfg) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(cfg.to_json().dump())));
    return buf;
}

namespace pipeline_detail {

inline fs::path samples_dir(const RunConfig& c) { return c.out_dir / "samples"; }
inline fs::path targets_dir(const RunConfig& c) { return c.out_dir / "targets"; }
inline fs::path solutions_dir(const RunConfig& c) { return c.out_dir / "solutions"; }

inline fs::path sample_file(const RunConfig& c, int i) {
    return samples_dir(c) / ("path_" + std::to_string(i) + ".txt");
}
inline fs::path target_file(const RunConfig& c, int i) {
    return targets_dir(c) / ("path_" + std::to_string(i) + ".json");
}
inline fs::path solution_file(const RunConfig& c, int i) {
    return solutions_dir(c) / ("path_" + std::to_string(i) + ".json");
}

inline std::vector<GHModel> truth_models(const RunConfig& cfg) {
    if (!cfg.expmean()) {
        if (cfg.link_models.empty())
            throw validation_error("this stage needs ground-truth link models in the config");
        return cfg.link_models;
    }
    if (cfg.link_means.empty())
        throw validation_error("this stage needs ground-truth link means in the config");
    std::vector<GHModel> out;
    for (double m : cfg.link_means) out.push_back(GHModel{{1.0 / m}, {1.0}});
    return out;
}

// Exact path MGF: product of the per-link MGFs.
inline std::function<double(double)> exact_path_mgf(const RunConfig& cfg, int path) {
    const auto models = truth_models(cfg);
    std::vector<GHModel> on_path;
    for (int j : cfg.topology.path_links(path)) on_path.push_back(models[j]);
    return [on_path](double t) {
        double prod = 1.0;
        for (const auto& m : on_path) prod *= gh_mgf_unchecked(m, t);
        return prod;
    };
}

inline std::vector<double> expmean_default_tau(double mean_scale, int count, std::uint64_t seed) {
    const double lo = 0.2 / mean_scale, hi = 3.0 / mean_scale;
    SubstreamRng rng(seed, 0x65746175, 0);
    std::vector<double> tau(count);
    for (int i = 0; i < count; ++i) {
        const double frac = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
        tau[i] = lo * std::pow(hi / lo, frac) * (1.0 + 0.05 * rng.next_double(-1.0, 1.0));
    }
    std::sort(tau.begin(), tau.end());
    return tau;
}

}  // namespace pipeline_detail

inline void run_simulate(const RunConfig& cfg) {
    using namespace pipeline_detail;
    const auto models = truth_models(cfg);
    fs::create_directories(samples_dir(cfg));
    std::vector<std::uint64_t> counts(cfg.topology.path_count(), cfg.samples_per_path);
    const ProbeSampleSet set = simulate_paths(cfg.topology, models, counts, cfg.seed);
    for (int i = 0; i < cfg.topology.path_count(); ++i)
        write_sample_file(sample_file(cfg, i), i, set.samples[i], cfg.seed);
    json manifest{{"schema_version", cfg.schema_version},
                  {"config_hash", config_hash(cfg)},
                  {"mode", cfg.mode},
                  {"seed", cfg.seed},
                  {"L", cfg.samples_per_path},
                  {"paths", cfg.topology.path_count()}};
    write_json_file(cfg.out_dir / "manifest.json", manifest);
}

// Builds one target file per path. Ideal modes evaluate the closed-form
// MGF; sampled modes read the simulate output. The grids actually used are
// also persisted to taus.json so a later run can reproduce the targets
// bit-exactly.
inline void run_estimate(const RunConfig& cfg,
                         const std::optional<fs::path>& tau_file = std::nullopt) {
    using namespace pipeline_detail;
    fs::create_directories(targets_dir(cfg));

    std::optional<std::vector<std::vector<double>>> tau_override = cfg.tau_lists;
    if (tau_file) {
        const json tj = read_json_file(*tau_file);
        std::vector<std::vector<double>> lists(cfg.topology.path_count());
        for (const auto& e : tj.at("paths"))
            lists.at(e.at("path").get<int>()) = e.at("tau").get<std::vector<double>>();
        tau_override = lists;
    }

    json taus{{"paths", json::array()}};
    for (int i = 0; i < cfg.topology.path_count(); ++i) {
        const int n_blocks = static_cast<int>(cfg.topology.path_links(i).size());

        std::vector<double> samples;
        std::function<double(double)> mgf;
        if (cfg.ideal()) {
            mgf = exact_path_mgf(cfg, i);
        } else {
            const SampleFile sf = read_sample_file(sample_file(cfg, i));
            samples = std::move(sf.samples);
            mgf = [&samples](double t) {
                return empirical_mgf(std::span<const double>(samples), t);
            };
        }

        json target_json;
        std::vector<double> tau;
        if (!cfg.expmean()) {
            tau = tau_override ? tau_override->at(i)
                               : default_tau(cfg.basis, n_blocks,
                                             cfg.seed ^ (0x9e37ULL * (i + 1)), cfg.tau_policy);
            const auto c_hat =
                c_vector_from_mgf(mgf, tau, n_blocks, cfg.basis.pivot());
            EPSInstance inst = assemble_eps(cfg.basis, n_blocks, tau, c_hat);
            inst.path_id = i;
            target_json = eps_to_json(inst);
        } else {
            if (tau_override) {
                tau = tau_override->at(i);
            } else {
                // Scale the grid to the path's mean delay.
                double mean_scale;
                if (cfg.ideal()) {
                    const double h = 1e-6;
                    mean_scale = (1.0 - mgf(h)) / h;
                } else {
                    double s = 0.0;
                    for (double v : samples) s += v;
                    mean_scale = s / static_cast<double>(samples.size());
                }
                mean_scale = std::max(mean_scale, 1e-9);
                tau = expmean_default_tau(mean_scale, n_blocks,
                                          cfg.seed ^ (0x9e37ULL * (i + 1)));
            }
            ExpMeanInstance inst = build_expmean_from_mgf(mgf, tau);
            inst.path_id = i;
            target_json = expmean_to_json(inst);
        }
        write_json_file(target_file(cfg, i), target_json);
        taus["paths"].push_back(json{{"path", i}, {"tau", tau}});
    }
    write_json_file(cfg.out_dir / "taus.json", taus);
}

inline void run_solve(const RunConfig& cfg) {
    using namespace pipeline_detail;
    fs::create_directories(solutions_dir(cfg));
    for (int i = 0; i < cfg.topology.path_count(); ++i) {
        const json tj = read_json_file(target_file(cfg, i));
        SolutionSet sols;
        if (tj.at("mode").get<std::string>() == "gh") {
            const EPSInstance inst = eps_from_json(tj);
            SolveSettings settings;
            settings.seed = cfg.seed ^ (0x50f3ULL * (i + 1));
            sols = solve_square_system(inst, settings);
        } else {
            const ExpMeanInstance inst = expmean_from_json(tj);
            sols = expmean_solution_set(solve_expmean(inst), inst.n_links);
        }
        write_json_file(solution_file(cfg, i), solutions_to_json(sols, i));
    }
}

// Joint refit of all link weights against every path's measured MGF curve,
// started from the matched assignment. Pooling the paths tightens links
// whose own solve was noise-limited; kept only when it reduces the
// weighted misfit. Damped Gauss-Newton on the product-of-affine model.
inline bool polish_report(const RunConfig& cfg, MatchReport& report) {
    using namespace pipeline_detail;
    const int d = cfg.basis.free_stages();
    const int n_links = cfg.topology.link_count();
    const int m = cfg.topology.path_count();
    for (const auto& la : report.links)
        if (!la.ok) return false;

    const double min_rate = *std::min_element(cfg.basis.rates.begin(), cfg.basis.rates.end());
    const double max_rate = *std::max_element(cfg.basis.rates.begin(), cfg.basis.rates.end());
    const int pts = 16;
    std::vector<double> grid(pts);
    for (int j = 0; j < pts; ++j)
        grid[j] = 0.2 * min_rate * std::pow(4.0 * max_rate / min_rate, static_cast<double>(j) / (pts - 1));

    struct Row {
        int path;
        double t, measured, weight;
    };
    std::vector<Row> rows;
    for (int i = 0; i < m; ++i) {
        const SampleFile sf = read_sample_file(sample_file(cfg, i));
        std::span<const double> s(sf.samples);
        for (double t : grid) {
            const double m1 = empirical_mgf(s, t);
            const double m2 = empirical_mgf(s, 2.0 * t);
            const double stderr1 =
                std::sqrt(std::max(m2 - m1 * m1, 1e-12) / static_cast<double>(s.size()));
            rows.push_back({i, t, m1, 1.0 / stderr1});
        }
    }

    // Unknowns: the free weights of every link. Per-link MGF is affine in
    // them; a path's MGF is the product over its links.
    Eigen::VectorXd x(n_links * d);
    for (const auto& la : report.links)
        for (int k = 0; k < d; ++k) x(la.link * d + k) = la.value(k).real();

    auto link_mgf = [&](const Eigen::VectorXd& w, int link, double t) {
        double v = cfg.basis.pivot() / (cfg.basis.pivot() + t);
        for (int k = 0; k < d; ++k)
            v += w(link * d + k) * (cfg.basis.rates[k] / (cfg.basis.rates[k] + t) -
                                    cfg.basis.pivot() / (cfg.basis.pivot() + t));
        return v;
    };
    auto residuals = [&](const Eigen::VectorXd& w) {
        Eigen::VectorXd r(static_cast<int>(rows.size()));
        for (std::size_t ri = 0; ri < rows.size(); ++ri) {
            double model = 1.0;
            for (int l : cfg.topology.path_links(rows[ri].path))
                model *= link_mgf(w, l, rows[ri].t);
            r(static_cast<int>(ri)) = (model - rows[ri].measured) * rows[ri].weight;
        }
        return r;
    };

    Eigen::VectorXd r = residuals(x);
    const double initial_cost = r.squaredNorm();
    double cost = initial_cost;
    for (int iter = 0; iter < 30; ++iter) {
        Eigen::MatrixXd jac(static_cast<int>(rows.size()), n_links * d);
        jac.setZero();
        for (std::size_t ri = 0; ri < rows.size(); ++ri) {
            const auto& row = rows[ri];
            const auto& links = cfg.topology.path_links(row.path);
            double model = 1.0;
            std::vector<double> per_link(links.size());
            for (std::size_t li = 0; li < links.size(); ++li) {
                per_link[li] = link_mgf(x, links[li], row.t);
                model *= per_link[li];
            }
            for (std::size_t li = 0; li < links.size(); ++li) {
                const double rest = per_link[li] != 0.0 ? model / per_link[li] : 0.0;
                for (int k = 0; k < d; ++k) {
                    const double dmgf = cfg.basis.rates[k] / (cfg.basis.rates[k] + row.t) -
                                        cfg.basis.pivot() / (cfg.basis.pivot() + row.t);
                    jac(static_cast<int>(ri), links[li] * d + k) = rest * dmgf * row.weight;
                }
            }
        }
        const Eigen::MatrixXd jtj =
            jac.transpose() * jac + 1e-9 * Eigen::MatrixXd::Identity(n_links * d, n_links * d);
        const Eigen::VectorXd step = jtj.ldlt().solve(-jac.transpose() * r);
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 10; ++half) {
            const Eigen::VectorXd cand = x + scale * step;
            const Eigen::VectorXd rc = residuals(cand);
            if (rc.squaredNorm() < cost) {
                x = cand;
                r = rc;
                cost = rc.squaredNorm();
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved || step.norm() < 1e-12 * (1.0 + x.norm())) break;
    }
    if (!(cost < initial_cost)) return false;

    for (auto& la : report.links) {
        for (int k = 0; k < d; ++k) la.value(k) = Complex(x(la.link * d + k), 0.0);
        la.completed.resize(d + 1);
        double sum = 0.0;
        for (int k = 0; k < d; ++k) {
            la.completed[k] = x(la.link * d + k);
            sum += la.completed[k];
        }
        la.completed[d] = 1.0 - sum;
        la.model_valid = !gh_validate(GHModel{cfg.basis.rates, la.completed}).has_value();
    }
    report.notes.push_back("joint MGF refit applied (cost " + std::to_string(initial_cost) +
                           " -> " + std::to_string(cost) + ")");
    return true;
}

inline MatchReport run_match(const RunConfig& cfg) {
    using namespace pipeline_detail;
    std::vector<SolutionSet> sols;
    for (int i = 0; i < cfg.topology.path_count(); ++i)
        sols.push_back(solutions_from_json(read_json_file(solution_file(cfg, i))));
    MatchOptions opt;
    opt.delta = cfg.delta;
    opt.kind = cfg.expmean() ? MatchKind::exp_means : MatchKind::gh_weights;
    if (!cfg.expmean()) opt.basis = cfg.basis;
    MatchReport report = match_links(cfg.topology, sols, opt);
    if (cfg.mode == "gh" && cfg.refit) polish_report(cfg, report);
    write_json_file(cfg.out_dir / "match.json", match_report_to_json(report));
    return report;
}

// Truth rows for the error norm: free components per link.
inline std::vector<std::vector<double>> truth_rows(const RunConfig& cfg) {
    std::vector<std::vector<double>> rows;
    if (!cfg.expmean()) {
        const int d = cfg.basis.free_stages();
        for (const auto& m : cfg.link_models)
            rows.emplace_back(m.weights.begin(), m.weights.begin() + d);
    } else {
        for (double m : cfg.link_means) rows.push_back({m});
    }
    return rows;
}

inline std::string run_report(const RunConfig& cfg) {
    MatchReport report = match_report_from_json(read_json_file(cfg.out_dir / "match.json"));
    std::optional<std::vector<std::vector<double>>> truth;
    if ((!cfg.expmean() && !cfg.link_models.empty()) ||
        (cfg.expmean() && !cfg.link_means.empty()))
        truth = truth_rows(cfg);
    if (truth) report.error_norm = error_norm(report, *truth);
    const std::string table = match_report_table(report, truth ? &*truth : nullptr);
    write_text_file(cfg.out_dir / "report.txt", table);
    write_json_file(cfg.out_dir / "match.json", match_report_to_json(report));
    return table;
}

}  // namespace gnt
