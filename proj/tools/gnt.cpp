// Command-line front end: each estimation phase is a subcommand exchanging
// files under the run's output directory, so any stage can be re-run or
// replayed in isolation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gnt/json_io.hpp"
#include "gnt/pipeline.hpp"

namespace {

using namespace gnt;

RunConfig load_config(const std::string& path, const std::string& mode_override,
                      std::optional<std::uint64_t> seed_override,
                      const std::string& out_override, bool ideal,
                      std::optional<double> delta_override) {
    json j = read_json_file(path);
    if (!mode_override.empty()) j["mode"] = mode_override;
    RunConfig cfg = RunConfig::from_json(j);
    if (seed_override) cfg.seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (delta_override) cfg.delta = *delta_override;
    if (ideal && !cfg.ideal()) {
        cfg.mode = "ideal-" + cfg.mode;
        cfg.validate();
    }
    return cfg;
}

struct SelftestState {
    int failures = 0;
    void check(bool ok, const std::string& name, const std::string& detail) {
        std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                    detail.empty() ? "" : " - ", detail.c_str());
        if (!ok) ++failures;
    }
};

std::vector<double> draw_separated(SubstreamRng& rng, int count, double lo, double hi) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<double> v(count);
        for (auto& x : v) x = rng.next_double(lo, hi);
        std::sort(v.begin(), v.end());
        bool ok = true;
        for (int i = 1; i < count; ++i)
            if (v[i] - v[i - 1] < 0.3 * (hi - lo) / count) ok = false;
        if (ok) return v;
    }
    throw numeric_error("draw_separated: could not find a separated draw");
}

// Geometrically spread rates keep the expansion coefficients moderate, so
// a double-precision evaluation of the identities is meaningful.
ExpBasis geometric_basis(SubstreamRng& rng, int d) {
    const double ratio = rng.next_double(1.7, 2.3);
    const double scale = rng.next_double(0.4, 1.0);
    std::vector<double> rates(d + 1);
    for (int i = 0; i <= d; ++i)
        rates[i] = scale * std::pow(ratio, d - i) * (1.0 + 0.05 * rng.next_double(-1.0, 1.0));
    return ExpBasis{rates};
}

// Oracle suites for the identities behind the assembly: the kernel-product
// expansion, the two determinant closed forms, the evaluation-matrix
// nonsingularity, the block-constant Jacobian determinant and the agreement
// of the product and component representations.
int run_selftest() {
    SelftestState st;
    SubstreamRng rng(0x5e1f7e57, 1);

    {  // expansion identity
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 4);
            const ExpBasis basis = geometric_basis(rng, d);
            std::vector<int> omega(d, 0);
            const int total = 1 + static_cast<int>(rng.next_u64() % 6);
            for (int i = 0; i < total; ++i) ++omega[rng.next_u64() % d];
            const double t = rng.next_double(0.05, 12.0);
            worst = std::max(worst, expansion_residual(basis, omega, t));
        }
        st.check(worst <= 1e-9, "kernel-expansion-identity", "worst residual " + std::to_string(worst));
    }
    {  // inverse-power determinant closed form
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 3);
            std::vector<int> omegas(d);
            int size = 0;
            for (auto& w : omegas) {
                w = 1 + static_cast<int>(rng.next_u64() % 3);
                size += w;
            }
            if (size > 8) { --trial; continue; }
            const auto lambdas = draw_separated(rng, d, 0.4, 6.0);
            const auto ts = draw_separated(rng, size, 0.1, 15.0);
            const auto det = closed_form_det_W(omegas, lambdas, ts);
            const double rel = std::abs(det.closed_form - det.numeric) /
                               std::max(1e-300, std::abs(det.closed_form));
            worst = std::max(worst, rel);
        }
        st.check(worst <= 1e-8, "inverse-power-determinant", "worst relative " + std::to_string(worst));
    }
    {  // evaluation matrix nonsingular at pipeline-grade grids
        bool ok = true;
        for (int trial = 0; trial < 20; ++trial) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 3);
            const int n_blocks = 1 + static_cast<int>(rng.next_u64() % 2);
            const ExpBasis basis = geometric_basis(rng, d);
            TauPolicy pol;
            pol.cond_cap = 1e6;
            std::vector<double> tau;
            try {
                tau = default_tau(basis, n_blocks, rng.next_u64(), pol);
            } catch (const numeric_error&) {
                --trial;
                continue;
            }
            const Eigen::MatrixXd t_mat = build_T(basis, tau, n_blocks);
            double scale = 1.0;
            for (int r = 0; r < t_mat.rows(); ++r) scale *= t_mat.row(r).norm();
            if (!(std::abs(t_mat.determinant()) > 1e-12 * scale)) ok = false;
        }
        st.check(ok, "evaluation-matrix-nonsingular", "");
    }
    {  // block-constant Jacobian determinant
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 3);
            const int n_blocks = 2 + static_cast<int>(rng.next_u64() % 3);
            const ExpBasis basis = geometric_basis(rng, d);
            EPSInstance inst;
            inst.basis = basis;
            inst.n_blocks = n_blocks;
            inst.components = build_elementary_map(basis, n_blocks);
            for (const auto& p : inst.components) inst.components_dbl.push_back(to_double_poly(p));
            inst.target = Eigen::VectorXd::Zero(inst.dims());
            const auto a = draw_separated(rng, n_blocks, -2.0, 2.5);
            Eigen::VectorXcd x(inst.dims());
            for (int j = 0; j < n_blocks; ++j)
                for (int k = 0; k < d; ++k) x(j * d + k) = Complex(a[j], 0.0);
            Complex closed(1.0, 0.0);
            for (int j1 = 0; j1 < n_blocks; ++j1)
                for (int j2 = j1 + 1; j2 < n_blocks; ++j2)
                    for (int rep = 0; rep < d; ++rep) closed *= Complex(a[j1] - a[j2], 0.0);
            const Complex numeric = eps_jacobian_stage_major(inst, x).determinant();
            worst = std::max(worst, std::abs(numeric - closed) / std::max(1e-300, std::abs(closed)));
        }
        st.check(worst <= 1e-8, "block-constant-jacobian", "worst relative " + std::to_string(worst));
    }
    {  // Vandermonde determinant
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_u64() % 4);
            const auto ts = draw_separated(rng, n, 0.2, 5.0);
            const double closed = vandermonde_det_closed(ts);
            const double numeric = vandermonde_matrix(ts).determinant();
            worst = std::max(worst, std::abs(closed - numeric) / std::max(1e-300, std::abs(closed)));
        }
        st.check(worst <= 1e-12, "vandermonde-determinant", "worst relative " + std::to_string(worst));
    }
    {  // product form vs component table
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 3);
            const int n_blocks = 1 + static_cast<int>(rng.next_u64() % 4);
            ExpBasis basis{draw_separated(rng, d + 1, 0.3, 8.0)};
            EPSInstance inst;
            inst.basis = basis;
            inst.n_blocks = n_blocks;
            inst.components = build_elementary_map(basis, n_blocks);
            for (const auto& p : inst.components) inst.components_dbl.push_back(to_double_poly(p));
            inst.target = Eigen::VectorXd::Zero(inst.dims());
            std::vector<double> x(inst.dims());
            for (auto& v : x) v = rng.next_double(-1.5, 1.5);
            const double t = rng.next_double(0.05, 10.0);
            const double a = eval_product_form(basis, n_blocks, x, t);
            const double b = eval_component_form(inst, x, t);
            worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
        }
        st.check(worst <= 1e-10, "representation-equivalence", "worst relative " + std::to_string(worst));
    }
    {  // elementary symmetric Jacobian identity
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_u64() % 4);
            const auto xs = draw_separated(rng, n, -3.0, 3.0);
            double closed = 1.0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) closed *= xs[i] - xs[j];
            const double numeric = elementary_symmetric_jacobian(xs).determinant();
            worst = std::max(worst, std::abs(closed - numeric) / std::max(1e-300, std::abs(closed)));
        }
        st.check(worst <= 1e-10, "symmetric-map-jacobian", "worst relative " + std::to_string(worst));
    }

    std::printf("%s\n", st.failures == 0 ? "selftest: all suites passed"
                                         : "selftest: FAILURES PRESENT");
    return st.failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"link delay distribution estimation from end-to-end path measurements"};
    app.require_subcommand(1);

    std::string config_path, mode_override, out_override, tau_file;
    std::optional<std::uint64_t> seed_override;
    std::optional<double> delta_override;
    bool ideal = false;

    auto add_common = [&](CLI::App* cmd, bool need_config = true) {
        auto* opt = cmd->add_option("--config", config_path, "run configuration JSON");
        if (need_config) opt->required();
        cmd->add_option("--mode", mode_override, "override config mode (gh|ideal-gh|expmean|ideal-expmean)");
        cmd->add_option("--seed", seed_override, "override config seed");
        cmd->add_option("--out", out_override, "override output directory");
        cmd->add_option("--delta", delta_override, "fixed candidate merge radius");
        cmd->add_flag("--ideal", ideal, "use closed-form MGFs instead of samples");
    };

    auto* c_sim = app.add_subcommand("simulate", "draw per-path delay samples from ground truth");
    add_common(c_sim);
    auto* c_est = app.add_subcommand("estimate", "build per-path polynomial-system targets");
    add_common(c_est);
    c_est->add_option("--tau-file", tau_file, "replay grids from a previous run's taus.json");
    auto* c_sol = app.add_subcommand("solve", "find all roots of each path's system");
    add_common(c_sol);
    auto* c_mat = app.add_subcommand("match", "assign a parameter vector to every link");
    add_common(c_mat);
    auto* c_rep = app.add_subcommand("report", "write the actual-vs-estimated table");
    add_common(c_rep);
    app.add_subcommand("selftest", "run the numeric identity oracle suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("selftest")) return run_selftest();
        RunConfig cfg = load_config(config_path, mode_override, seed_override, out_override,
                                    ideal, delta_override);
        std::filesystem::create_directories(cfg.out_dir);
        if (app.got_subcommand("simulate")) {
            run_simulate(cfg);
            std::cout << "wrote " << cfg.topology.path_count() << " sample files under "
                      << cfg.out_dir / "samples" << "\n";
        } else if (app.got_subcommand("estimate")) {
            run_estimate(cfg, tau_file.empty() ? std::nullopt
                                               : std::optional<std::filesystem::path>(tau_file));
            std::cout << "wrote targets under " << cfg.out_dir / "targets" << "\n";
        } else if (app.got_subcommand("solve")) {
            run_solve(cfg);
            std::cout << "wrote solutions under " << cfg.out_dir / "solutions" << "\n";
        } else if (app.got_subcommand("match")) {
            const MatchReport r = run_match(cfg);
            std::cout << "matched " << r.links.size() << " links (delta " << r.delta_used
                      << (r.assumption_violation ? ", with flags" : "") << ")\n";
        } else if (app.got_subcommand("report")) {
            std::cout << run_report(cfg);
        }
    } catch (const gnt::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const gnt::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
