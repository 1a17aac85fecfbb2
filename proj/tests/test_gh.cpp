#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "gnt/gh.hpp"
#include "gnt/rng.hpp"

using namespace gnt;

namespace {

const GHModel kLink1{{5.0, 3.0, 1.0}, {0.17, 0.80, 0.03}};
const GHModel kLink2{{5.0, 3.0, 1.0}, {0.13, 0.47, 0.40}};

double direct_cdf(const GHModel& m, double u) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.rates.size(); ++k)
        s += m.weights[k] * (1.0 - std::exp(-m.rates[k] * u));
    return s;
}

}  // namespace

TEST_CASE("validation accepts the experiment models") {
    CHECK_FALSE(gh_validate(kLink1).has_value());
    CHECK_FALSE(gh_validate(kLink2).has_value());
}

TEST_CASE("validation rejects duplicate rates") {
    const auto v = gh_validate(GHModel{{2.0, 2.0}, {0.5, 0.5}});
    REQUIRE(v.has_value());
    CHECK(v->constraint == "rates_distinct");
}

TEST_CASE("validation rejects a negative density with a witness") {
    // density(0) = -5 + 2 < 0
    const auto v = gh_validate(GHModel{{5.0, 1.0}, {-1.0, 2.0}});
    REQUIRE(v.has_value());
    CHECK(v->constraint == "density");
}

TEST_CASE("validation rejects weights that do not sum to one") {
    const auto v = gh_validate(GHModel{{2.0, 1.0}, {0.6, 0.6}});
    REQUIRE(v.has_value());
    CHECK(v->constraint == "weight_sum");
}

TEST_CASE("cdf basics") {
    CHECK(gh_cdf(kLink1, 0.0) == 0.0);
    CHECK_THAT(gh_cdf(GHModel{{1.0}, {1.0}}, std::log(2.0)),
               Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(gh_cdf(kLink1, 1.0), Catch::Matchers::WithinAbs(direct_cdf(kLink1, 1.0), 1e-14));
    CHECK_THROWS_AS(gh_cdf(kLink1, -0.5), validation_error);
}

TEST_CASE("cdf is nondecreasing and saturates") {
    for (const auto& m : {kLink1, kLink2}) {
        const double min_rate = *std::min_element(m.rates.begin(), m.rates.end());
        double prev = 0.0;
        for (int i = 0; i <= 10000; ++i) {
            const double u = 50.0 / min_rate * i / 10000.0;
            const double v = gh_cdf_unchecked(m, u);
            CHECK(v >= prev - 1e-12);
            prev = v;
        }
        CHECK(gh_cdf(m, 50.0 / min_rate) >= 1.0 - 1e-6);
    }
}

TEST_CASE("mgf basics") {
    CHECK_THAT(gh_mgf(kLink1, 0.0), Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK_THAT(gh_mgf(GHModel{{1.0}, {1.0}}, 1.0), Catch::Matchers::WithinAbs(0.5, 1e-14));
}

TEST_CASE("mgf agrees with a Monte-Carlo average") {
    // Ten million draws put the Monte-Carlo error for exp(-2X) well inside
    // a three-sigma envelope of a few 1e-4.
    const std::size_t n = 10000000;
    const double t = 2.0;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        SubstreamRng rng(4242, 0, i);
        const double x = gh_invert_cdf(kLink2, rng.next_double());
        const double v = std::exp(-t * x);
        sum += v;
        sumsq += v * v;
    }
    const double mc = sum / n;
    const double stderr3 = 3.0 * std::sqrt((sumsq / n - mc * mc) / n);
    CHECK_THAT(gh_mgf(kLink2, t), Catch::Matchers::WithinAbs(mc, stderr3 + 1e-9));
}

TEST_CASE("sampling is deterministic in the seed") {
    const auto a = gh_sample(kLink1, 11, 64);
    const auto b = gh_sample(kLink1, 11, 64);
    CHECK(a == b);
    const auto c = gh_sample(kLink1, 12, 64);
    CHECK(a != c);
}

TEST_CASE("exponential sample mean") {
    const auto samples = gh_sample(GHModel{{1.0}, {1.0}}, 3, 1000000);
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(1.0, 0.01));
}

TEST_CASE("million samples stay close to the cdf in Kolmogorov distance") {
    const std::size_t n = 1000000;
    auto samples = gh_sample(kLink1, 17, n);
    std::sort(samples.begin(), samples.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; i += 97) {  // stride keeps the scan cheap
        const double f = gh_cdf_unchecked(kLink1, samples[i]);
        ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / n));
    }
    CHECK(ks < 0.002);
}

TEST_CASE("sampling matches the mgf within a Hoeffding envelope") {
    const std::size_t n = 1000000;
    const auto samples = gh_sample(kLink2, 23, n);
    SubstreamRng rng(29, 5);
    // Envelope for 5 grid points at failure probability 1e-3, tripled.
    const double eps = 3.0 * std::sqrt(std::log(2.0 * 5 / 1e-3) / (2.0 * n));
    for (int k = 0; k < 5; ++k) {
        const double t = rng.next_double(0.1, 6.0);
        double acc = 0.0;
        for (double v : samples) acc += std::exp(-t * v);
        CHECK_THAT(acc / n, Catch::Matchers::WithinAbs(gh_mgf(kLink2, t), eps));
    }
}

TEST_CASE("approximation reproduces bucket masses for telescoping targets") {
    const auto target = [](double u) { return 1.0 - std::exp(-u); };
    const GHModel m = gh_approximate(target, 8, 40);
    double sum = 0.0;
    for (double w : m.weights) sum += w;
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK_FALSE(gh_validate(m).has_value());
}

TEST_CASE("approximation error shrinks as the resolution doubles") {
    const auto target = [](double u) { return 1.0 - std::exp(-u); };
    auto sup_error = [&](int n) {
        const GHModel m = gh_approximate(target, n, 6 * n);
        double worst = 0.0;
        for (int i = 1; i <= 400; ++i) {
            const double u = 8.0 * i / 400.0;
            worst = std::max(worst, std::abs(gh_cdf_unchecked(m, u) - target(u)));
        }
        return worst;
    };
    const double coarse = sup_error(12);
    const double fine = sup_error(24);
    CHECK(fine < coarse);
}

TEST_CASE("approximation handles a Weibull target") {
    const auto target = [](double u) { return 1.0 - std::exp(-u * u); };  // shape 2
    const GHModel m = gh_approximate(target, 64, 192);
    CHECK_FALSE(gh_validate(m).has_value());
    double worst = 0.0;
    for (int i = 1; i <= 500; ++i) {
        const double u = 4.0 * i / 500.0;
        worst = std::max(worst, std::abs(gh_cdf_unchecked(m, u) - target(u)));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("approximation reports capacity exhaustion") {
    const auto target = [](double u) { return 1.0 - std::exp(-u); };
    ApproxOptions opt;
    opt.basis_cap = 32;
    CHECK_THROWS_AS(gh_approximate(target, 64, 400, opt), numeric_error);
}
