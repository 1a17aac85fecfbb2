#pragma once

#include <nlohmann/json.hpp>

#include <complex>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gnt/eps.hpp"
#include "gnt/errors.hpp"
#include "gnt/expmean.hpp"
#include "gnt/gh.hpp"
#include "gnt/matcher.hpp"
#include "gnt/solver.hpp"
#include "gnt/topology.hpp"

namespace gnt {

using json = nlohmann::json;

inline json complex_to_json(const Complex& z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const json& j) {
    return Complex(j.at(0).get<double>(), j.at(1).get<double>());
}

inline json cvec_to_json(const Eigen::VectorXcd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(complex_to_json(v(i)));
    return out;
}

inline Eigen::VectorXcd cvec_from_json(const json& j) {
    Eigen::VectorXcd v(static_cast<int>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = complex_from_json(j[i]);
    return v;
}

inline json gh_to_json(const GHModel& m) { return json{{"rates", m.rates}, {"weights", m.weights}}; }

inline GHModel gh_from_json(const json& j) {
    GHModel m;
    m.rates = j.at("rates").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    return m;
}

inline json topology_to_json(const PathLinkMatrix& a) {
    json paths = json::array();
    for (int i = 0; i < a.path_count(); ++i) paths.push_back(a.path_links(i));
    return json{{"num_links", a.link_count()}, {"paths", paths}};
}

inline PathLinkMatrix topology_from_json(const json& j) {
    return PathLinkMatrix::from_paths(j.at("num_links").get<int>(),
                                      j.at("paths").get<std::vector<std::vector<int>>>());
}

// Full dump of one path's system: the exact component table with rational
// coefficients as strings plus the floating target, for replay and external
// cross-checking. Loading recomputes the table from (basis, n_blocks).
inline json eps_to_json(const EPSInstance& inst) {
    json comps = json::array();
    const int n = inst.n_blocks;
    for (std::size_t i = 0; i < inst.components.size(); ++i) {
        json terms = json::array();
        for (const auto& [mono, coeff] : inst.components[i].terms) {
            terms.push_back(json{{"exps", std::vector<int>(mono.begin(), mono.end())},
                                 {"coeff", rational_to_string(coeff)},
                                 {"value", to_double(coeff)}});
        }
        comps.push_back(json{{"stage", static_cast<int>(i) / n + 1},
                             {"power", static_cast<int>(i) % n + 1},
                             {"terms", terms}});
    }
    std::vector<double> target(inst.target.data(), inst.target.data() + inst.target.size());
    return json{{"mode", "gh"},          {"path", inst.path_id}, {"basis", inst.basis.rates},
                {"n_blocks", inst.n_blocks}, {"tau", inst.tau},  {"target", target},
                {"components", comps}};
}

inline EPSInstance eps_from_json(const json& j) {
    ExpBasis basis{j.at("basis").get<std::vector<double>>()};
    const int n_blocks = j.at("n_blocks").get<int>();
    EPSInstance inst;
    inst.basis = basis;
    inst.n_blocks = n_blocks;
    inst.path_id = j.value("path", -1);
    inst.tau = j.at("tau").get<std::vector<double>>();
    inst.components = build_elementary_map(basis, n_blocks);
    for (const auto& p : inst.components) inst.components_dbl.push_back(to_double_poly(p));
    const auto target = j.at("target").get<std::vector<double>>();
    inst.target.resize(static_cast<int>(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i) inst.target(static_cast<int>(i)) = target[i];
    if (inst.target.size() != inst.dims())
        throw validation_error("eps_from_json: target length disagrees with dimensions");
    return inst;
}

inline json expmean_to_json(const ExpMeanInstance& inst) {
    std::vector<double> c(inst.c_tau.data(), inst.c_tau.data() + inst.c_tau.size());
    std::vector<double> e(inst.targets.data(), inst.targets.data() + inst.targets.size());
    return json{{"mode", "expmean"}, {"path", inst.path_id}, {"n_blocks", inst.n_links},
                {"tau", inst.tau},   {"c_tau", c},           {"target", e}};
}

inline ExpMeanInstance expmean_from_json(const json& j) {
    ExpMeanInstance inst;
    inst.path_id = j.value("path", -1);
    inst.n_links = j.at("n_blocks").get<int>();
    inst.tau = j.at("tau").get<std::vector<double>>();
    const auto c = j.at("c_tau").get<std::vector<double>>();
    const auto e = j.at("target").get<std::vector<double>>();
    inst.c_tau.resize(static_cast<int>(c.size()));
    inst.targets.resize(static_cast<int>(e.size()));
    for (std::size_t i = 0; i < c.size(); ++i) inst.c_tau(static_cast<int>(i)) = c[i];
    for (std::size_t i = 0; i < e.size(); ++i) inst.targets(static_cast<int>(i)) = e[i];
    return inst;
}

inline json solutions_to_json(const SolutionSet& s, int path_id = -1) {
    json roots = json::array();
    for (const auto& r : s.roots) {
        roots.push_back(json{{"x", cvec_to_json(r.x)},
                             {"residual", r.residual},
                             {"jacobian_det", complex_to_json(r.jacobian_det)},
                             {"multiplicity", r.multiplicity},
                             {"symmetry_completed", r.symmetry_completed}});
    }
    json reps = json::array();
    for (const auto& rep : s.representatives) reps.push_back(cvec_to_json(rep));
    json quarantined = json::array();
    for (const auto& q : s.quarantined) quarantined.push_back(cvec_to_json(q));
    return json{{"path", path_id},
                {"free_stages", s.free_stages},
                {"n_blocks", s.n_blocks},
                {"roots", roots},
                {"representatives", reps},
                {"at_infinity", s.at_infinity},
                {"failed_paths", s.failed_paths},
                {"quarantined", quarantined},
                {"permutation_closed", s.permutation_closed},
                {"representative_ambiguous", s.representative_ambiguous}};
}

inline SolutionSet solutions_from_json(const json& j) {
    SolutionSet s;
    s.free_stages = j.at("free_stages").get<int>();
    s.n_blocks = j.at("n_blocks").get<int>();
    for (const auto& rj : j.at("roots")) {
        EPSRoot r;
        r.x = cvec_from_json(rj.at("x"));
        r.residual = rj.at("residual").get<double>();
        r.jacobian_det = complex_from_json(rj.at("jacobian_det"));
        r.multiplicity = rj.at("multiplicity").get<int>();
        r.symmetry_completed = rj.at("symmetry_completed").get<bool>();
        s.roots.push_back(std::move(r));
    }
    for (const auto& rj : j.at("representatives")) s.representatives.push_back(cvec_from_json(rj));
    for (const auto& qj : j.at("quarantined")) s.quarantined.push_back(cvec_from_json(qj));
    s.at_infinity = j.at("at_infinity").get<int>();
    s.failed_paths = j.at("failed_paths").get<int>();
    s.permutation_closed = j.at("permutation_closed").get<bool>();
    s.representative_ambiguous = j.at("representative_ambiguous").get<bool>();
    return s;
}

inline json match_report_to_json(const MatchReport& r) {
    json links = json::array();
    for (const auto& la : r.links) {
        links.push_back(json{{"link", la.link},
                             {"value", cvec_to_json(la.value)},
                             {"completed", la.completed},
                             {"sources", la.source_paths},
                             {"method", la.method},
                             {"flag", la.flag},
                             {"ok", la.ok},
                             {"model_valid", la.model_valid},
                             {"max_imag", la.max_imag}});
    }
    json out{{"kind", r.kind == MatchKind::gh_weights ? "gh" : "expmean"},
             {"delta", r.delta_used},
             {"delta_auto", r.delta_auto},
             {"equivalence_strict", r.equivalence_strict},
             {"assumption_violation", r.assumption_violation},
             {"notes", r.notes},
             {"links", links}};
    if (r.error_norm) out["error_norm"] = *r.error_norm;
    return out;
}

inline MatchReport match_report_from_json(const json& j) {
    MatchReport r;
    r.kind = j.at("kind").get<std::string>() == "gh" ? MatchKind::gh_weights : MatchKind::exp_means;
    r.delta_used = j.at("delta").get<double>();
    r.delta_auto = j.at("delta_auto").get<bool>();
    r.equivalence_strict = j.at("equivalence_strict").get<bool>();
    r.assumption_violation = j.at("assumption_violation").get<bool>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& lj : j.at("links")) {
        LinkAssignment la;
        la.link = lj.at("link").get<int>();
        la.value = cvec_from_json(lj.at("value"));
        la.completed = lj.at("completed").get<std::vector<double>>();
        la.source_paths = lj.at("sources").get<std::vector<int>>();
        la.method = lj.at("method").get<std::string>();
        la.flag = lj.at("flag").get<std::string>();
        la.ok = lj.at("ok").get<bool>();
        la.model_valid = lj.at("model_valid").get<bool>();
        la.max_imag = lj.at("max_imag").get<double>();
        r.links.push_back(std::move(la));
    }
    if (j.contains("error_norm")) r.error_norm = j.at("error_norm").get<double>();
    return r;
}

// Aligned actual-vs-estimated table, one row per link.
inline std::string match_report_table(const MatchReport& r,
                                      const std::vector<std::vector<double>>* truth = nullptr) {
    std::ostringstream out;
    const int d = r.links.empty() ? 0 : static_cast<int>(r.links.front().completed.size());
    auto cell = [&](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%10.4f", v);
        return std::string(buf);
    };
    out << "Link";
    if (truth) {
        for (int k = 1; k <= d; ++k) out << "      w_j" << k;
    }
    for (int k = 1; k <= d; ++k) out << "     est_j" << k;
    out << "   status\n";
    for (const auto& la : r.links) {
        out << std::setw(4) << la.link + 1;
        if (truth) {
            const auto& t = truth->at(la.link);
            for (int k = 0; k < d; ++k) {
                double v;
                if (k < static_cast<int>(t.size()))
                    v = t[k];
                else
                    v = 1.0 - std::accumulate(t.begin(), t.end(), 0.0);
                out << cell(v);
            }
        }
        for (int k = 0; k < d; ++k) out << cell(la.ok ? la.completed[k] : 0.0);
        out << "   " << (la.ok ? (la.flag.empty() ? "ok" : la.flag) : "FAILED " + la.flag);
        if (la.ok && !la.model_valid) out << " [invalid-model]";
        out << "\n";
    }
    if (r.error_norm) out << "error norm: " << *r.error_norm << "\n";
    return out.str();
}

inline void write_text_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    if (!out) throw validation_error("cannot write file: " + p.string());
    out << content;
}

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw validation_error("cannot read file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json_file(const std::filesystem::path& p, const json& j) {
    write_text_file(p, j.dump(2) + "\n");
}

inline json read_json_file(const std::filesystem::path& p) {
    try {
        return json::parse(read_text_file(p));
    } catch (const json::parse_error& e) {
        throw validation_error("malformed JSON in " + p.string() + ": " + e.what());
    }
}

}  // namespace gnt
