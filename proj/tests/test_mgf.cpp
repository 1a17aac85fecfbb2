#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gnt/eps.hpp"
#include "gnt/gh.hpp"
#include "gnt/mgf.hpp"

using namespace gnt;

TEST_CASE("empirical mgf of all-zero samples is one") {
    const std::vector<double> samples(100, 0.0);
    CHECK(empirical_mgf(samples, 0.5) == 1.0);
    CHECK(empirical_mgf(samples, 7.0) == 1.0);
}

TEST_CASE("two-term average") {
    const std::vector<double> samples{0.0, std::log(2.0)};
    CHECK_THAT(empirical_mgf(samples, 1.0), Catch::Matchers::WithinAbs(0.75, 1e-15));
}

TEST_CASE("million exponential samples match the analytic mgf") {
    const GHModel exp1{{1.0}, {1.0}};
    const auto samples = gh_sample(exp1, 91, 1000000);
    CHECK_THAT(empirical_mgf(samples, 1.0), Catch::Matchers::WithinAbs(0.5, 0.002));
}

TEST_CASE("empirical mgf is nonincreasing in t") {
    const GHModel m{{5.0, 3.0, 1.0}, {0.17, 0.80, 0.03}};
    const auto samples = gh_sample(m, 5, 20000);
    double prev = 1.0;
    for (double t = 0.25; t <= 16.0; t *= 2.0) {
        const double v = empirical_mgf(samples, t);
        CHECK(v <= prev + 1e-15);
        CHECK(v > 0.0);
        prev = v;
    }
}

TEST_CASE("empty samples and bad t are rejected") {
    const std::vector<double> none;
    CHECK_THROWS_AS(empirical_mgf(none, 1.0), validation_error);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(empirical_mgf(one, 0.0), validation_error);
}

TEST_CASE("duplicate grid points are rejected") {
    const std::vector<double> samples{1.0, 2.0};
    CHECK_THROWS_AS(c_vector(samples, {1.0, 1.0}, 1, 1.0), validation_error);
    CHECK_THROWS_AS(c_vector(samples, {1.0, -2.0}, 1, 1.0), validation_error);
}

TEST_CASE("single pivot-rate exponential has identically zero target") {
    // One link equal to the pivot stage: M(t) (pivot + t) == pivot for all t.
    const GHModel m{{5.0, 3.0, 1.0}, {0.0, 0.0, 1.0}};
    const auto c = c_vector_from_mgf([&](double t) { return gh_mgf_unchecked(m, t); },
                                     {0.3, 1.1, 2.7}, 1, 1.0);
    for (double v : c) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("exact c vector equals T times the component map at the weights") {
    const ExpBasis basis{{5.0, 3.0, 1.0}};
    const int n_blocks = 2;
    const GHModel l1{{5, 3, 1}, {0.17, 0.80, 0.03}};
    const GHModel l2{{5, 3, 1}, {0.13, 0.47, 0.40}};
    const auto mgf = [&](double t) { return gh_mgf_unchecked(l1, t) * gh_mgf_unchecked(l2, t); };
    const std::vector<double> tau{0.31, 0.9, 2.2, 5.5};
    const auto c = c_vector_from_mgf(mgf, tau, n_blocks, basis.pivot());

    const auto components = build_elementary_map(basis, n_blocks);
    const std::vector<double> w{0.17, 0.80, 0.13, 0.47};
    Eigen::VectorXd e_w(static_cast<int>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i)
        e_w(static_cast<int>(i)) = to_double_poly(components[i]).eval(w);
    const Eigen::VectorXd lhs = build_T(basis, tau, n_blocks) * e_w;
    for (std::size_t k = 0; k < tau.size(); ++k)
        CHECK_THAT(lhs(static_cast<int>(k)), Catch::Matchers::WithinAbs(c[k], 1e-10));
}

TEST_CASE("hoeffding sample sizes") {
    CHECK(hoeffding_sample_size(0.01, std::exp(-2.0), 1) == 10000);
    CHECK(hoeffding_sample_size(0.005, 1e-3, 4) ==
          static_cast<std::uint64_t>(std::ceil(std::log(4000.0) / (2.0 * 0.005 * 0.005))));
    // Doubling the grid adds ln 2 / (2 eps^2) samples.
    const double eps = 0.02;
    const auto l1 = hoeffding_sample_size(eps, 0.05, 3);
    const auto l2 = hoeffding_sample_size(eps, 0.05, 6);
    CHECK(std::llabs(static_cast<long long>(l2 - l1) -
                     static_cast<long long>(std::llround(std::log(2.0) / (2 * eps * eps)))) <= 1);
}

TEST_CASE("default grid draws are distinct, positive, and conditioned") {
    const ExpBasis basis{{5.0, 3.0, 1.0}};
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto tau = default_tau(basis, 2, seed);
        REQUIRE(tau.size() == 4);
        for (std::size_t i = 0; i < tau.size(); ++i) {
            CHECK(tau[i] > 0.0);
            if (i > 0) CHECK(tau[i] > tau[i - 1]);
        }
        CHECK(condition_number(build_T(basis, tau, 2)) <= 1e10);
    }
}
