#include <catch2/catch_amalgamated.hpp>

#include "gnt/rng.hpp"
#include "gnt/topology.hpp"

using namespace gnt;

namespace {

PathLinkMatrix tree_matrix() { return PathLinkMatrix::from_paths(3, {{0, 1}, {0, 2}}); }

PathLinkMatrix general_matrix() {
    return PathLinkMatrix::from_paths(4, {{0, 1}, {0, 2}, {1, 3}});
}

// Combinatorial characterization at k = 1: no zero column and all columns
// pairwise distinct.
bool one_identifiable_by_columns(const PathLinkMatrix& a) {
    for (int j = 0; j < a.link_count(); ++j) {
        if (a.paths_with_link(j).empty()) return false;
        for (int k = j + 1; k < a.link_count(); ++k) {
            bool same = true;
            for (int i = 0; i < a.path_count(); ++i)
                if (a.entry(i, j) != a.entry(i, k)) same = false;
            if (same) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("tree and general topologies are 1-identifiable") {
    CHECK(is_k_identifiable(tree_matrix(), 1));
    CHECK(is_k_identifiable(general_matrix(), 1));
}

TEST_CASE("duplicate columns break 1-identifiability") {
    const auto a = PathLinkMatrix::from_paths(3, {{0, 1, 2}, {1, 2}});
    CHECK_FALSE(is_k_identifiable(a, 1));  // links 1 and 2 have identical columns
}

TEST_CASE("zero column breaks 1-identifiability") {
    const auto a = PathLinkMatrix::from_paths(3, {{0}, {1}});
    CHECK_FALSE(is_k_identifiable(a, 1));
}

TEST_CASE("k larger than column budget tests all columns") {
    const auto a = PathLinkMatrix::from_dense({{1, 0}, {0, 1}, {1, 1}});
    CHECK(is_k_identifiable(a, 2));  // 2k = 4 > N = 2, both columns independent
}

TEST_CASE("link intersection identity singles out each link") {
    const auto tree = tree_matrix();
    CHECK(link_intersection_identity(tree, 0) == std::set<int>{0});
    CHECK(link_intersection_identity(tree, 1) == std::set<int>{1});
    CHECK(link_intersection_identity(tree, 2) == std::set<int>{2});
    const auto gen = general_matrix();
    for (int j = 0; j < gen.link_count(); ++j)
        CHECK(link_intersection_identity(gen, j) == std::set<int>{j});
}

TEST_CASE("duplicated columns appear together in the intersection set") {
    const auto a = PathLinkMatrix::from_paths(3, {{0, 1, 2}, {1, 2}});
    CHECK(link_intersection_identity(a, 1) == std::set<int>({1, 2}));
}

TEST_CASE("random 1-identifiable matrices satisfy the intersection identity") {
    SubstreamRng rng(2024, 0);
    int tested = 0;
    for (int trial = 0; trial < 400 && tested < 60; ++trial) {
        const int m = 2 + static_cast<int>(rng.next_u64() % 4);
        const int n = 2 + static_cast<int>(rng.next_u64() % 7);  // N <= 8
        std::vector<std::vector<int>> rows(m, std::vector<int>(n, 0));
        for (auto& row : rows) {
            bool nonempty = false;
            for (int j = 0; j < n; ++j) {
                row[j] = rng.next_u64() % 3 == 0 ? 1 : 0;
                nonempty |= row[j] == 1;
            }
            if (!nonempty) row[rng.next_u64() % n] = 1;
        }
        PathLinkMatrix a = PathLinkMatrix::from_dense(rows);
        const bool ident = is_k_identifiable(a, 1);
        CHECK(ident == one_identifiable_by_columns(a));
        if (!ident) continue;
        ++tested;
        for (int j = 0; j < a.link_count(); ++j)
            REQUIRE(link_intersection_identity(a, j) == std::set<int>{j});
    }
    CHECK(tested >= 30);
}

TEST_CASE("rank test agrees with column characterization at k=1") {
    SubstreamRng rng(77, 1);
    for (int trial = 0; trial < 120; ++trial) {
        const int m = 1 + static_cast<int>(rng.next_u64() % 4);
        const int n = 1 + static_cast<int>(rng.next_u64() % 6);
        std::vector<std::vector<int>> rows(m, std::vector<int>(n, 0));
        bool any = false;
        for (auto& row : rows)
            for (auto& v : row) {
                v = rng.next_u64() % 2;
                any |= v == 1;
            }
        if (!any) continue;
        for (auto& row : rows) {
            bool nonempty = false;
            for (int v : row) nonempty |= v == 1;
            if (!nonempty) row[0] = 1;
        }
        PathLinkMatrix a = PathLinkMatrix::from_dense(rows);
        CHECK(is_k_identifiable(a, 1) == one_identifiable_by_columns(a));
    }
}

TEST_CASE("json and csv round-trips preserve the matrix") {
    const auto a = general_matrix();
    const auto b = PathLinkMatrix::from_csv(a.to_csv());
    REQUIRE(b.path_count() == a.path_count());
    REQUIRE(b.link_count() == a.link_count());
    for (int i = 0; i < a.path_count(); ++i) CHECK(b.path_links(i) == a.path_links(i));
}

TEST_CASE("malformed matrices are rejected") {
    CHECK_THROWS_AS(PathLinkMatrix::from_paths(3, {{}}), validation_error);
    CHECK_THROWS_AS(PathLinkMatrix::from_paths(2, {{0, 2}}), validation_error);
    CHECK_THROWS_AS(PathLinkMatrix::from_dense({{1, 2}}), validation_error);
}
