#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/rational.hpp"

namespace gnt {

// Binary m x N routing matrix. Row i lists the links traversed by path i.
// Link and path indices are 0-based throughout; reports print 1-based labels.
class PathLinkMatrix {
public:
    static PathLinkMatrix from_paths(int num_links, std::vector<std::vector<int>> paths) {
        PathLinkMatrix a;
        a.num_links_ = num_links;
        a.paths_ = std::move(paths);
        a.check_and_derive();
        return a;
    }

    static PathLinkMatrix from_dense(const std::vector<std::vector<int>>& rows) {
        if (rows.empty()) throw validation_error("path-link matrix: no rows");
        std::vector<std::vector<int>> paths(rows.size());
        const int n = static_cast<int>(rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<int>(rows[i].size()) != n)
                throw validation_error("path-link matrix: ragged rows");
            for (int j = 0; j < n; ++j) {
                if (rows[i][j] != 0 && rows[i][j] != 1)
                    throw validation_error("path-link matrix: entries must be 0/1");
                if (rows[i][j] == 1) paths[i].push_back(j);
            }
        }
        return from_paths(n, std::move(paths));
    }

    // One row per line, comma-separated 0/1 entries.
    static PathLinkMatrix from_csv(const std::string& text) {
        std::vector<std::vector<int>> rows;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<int> row;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) row.push_back(std::stoi(cell));
            rows.push_back(std::move(row));
        }
        return from_dense(rows);
    }

    std::string to_csv() const {
        std::ostringstream out;
        for (int i = 0; i < path_count(); ++i) {
            for (int j = 0; j < num_links_; ++j) out << (entry(i, j) ? 1 : 0) << (j + 1 < num_links_ ? "," : "");
            out << "\n";
        }
        return out.str();
    }

    int path_count() const { return static_cast<int>(paths_.size()); }
    int link_count() const { return num_links_; }

    bool entry(int path, int link) const {
        return std::binary_search(paths_[path].begin(), paths_[path].end(), link);
    }

    // p_i: links traversed by path i, sorted ascending.
    const std::vector<int>& path_links(int path) const { return paths_[path]; }

    // G_j: paths containing link j.
    const std::vector<int>& paths_with_link(int link) const { return link_paths_[link]; }

    // B_j = [m] \ G_j.
    std::vector<int> paths_without_link(int link) const {
        std::vector<int> out;
        for (int i = 0; i < path_count(); ++i)
            if (!entry(i, link)) out.push_back(i);
        return out;
    }

    // S: links covered by at least two paths.
    std::vector<int> multiply_covered_links() const {
        std::vector<int> out;
        for (int j = 0; j < num_links_; ++j)
            if (link_paths_[j].size() >= 2) out.push_back(j);
        return out;
    }

private:
    void check_and_derive() {
        if (num_links_ <= 0) throw validation_error("path-link matrix: num_links must be positive");
        if (paths_.empty()) throw validation_error("path-link matrix: no paths");
        for (auto& p : paths_) {
            if (p.empty()) throw validation_error("path-link matrix: a path traverses no link");
            std::sort(p.begin(), p.end());
            if (std::adjacent_find(p.begin(), p.end()) != p.end())
                throw validation_error("path-link matrix: repeated link in a path");
            if (p.front() < 0 || p.back() >= num_links_)
                throw validation_error("path-link matrix: link index out of range");
        }
        link_paths_.assign(num_links_, {});
        for (int i = 0; i < path_count(); ++i)
            for (int j : paths_[i]) link_paths_[j].push_back(i);
    }

    int num_links_ = 0;
    std::vector<std::vector<int>> paths_;
    std::vector<std::vector<int>> link_paths_;
};

namespace topo_detail {

// Exact rank by fraction-free elimination; identifiability is a discrete
// property, so no floating-point rank thresholds.
inline int exact_rank(std::vector<std::vector<BigInt>> a) {
    const int rows = static_cast<int>(a.size());
    if (rows == 0) return 0;
    const int cols = static_cast<int>(a.front().size());
    int rank = 0;
    for (int c = 0; c < cols && rank < rows; ++c) {
        int pivot = -1;
        for (int r = rank; r < rows; ++r)
            if (a[r][c] != 0) { pivot = r; break; }
        if (pivot < 0) continue;
        std::swap(a[rank], a[pivot]);
        for (int r = rank + 1; r < rows; ++r) {
            if (a[r][c] == 0) continue;
            const BigInt f = a[r][c], p = a[rank][c];
            for (int cc = c; cc < cols; ++cc) a[r][cc] = a[r][cc] * p - a[rank][cc] * f;
        }
        ++rank;
    }
    return rank;
}

template <typename Fn>
inline bool for_each_combination(int n, int r, Fn&& fn) {
    std::vector<int> idx(r);
    for (int i = 0; i < r; ++i) idx[i] = i;
    while (true) {
        if (!fn(idx)) return false;
        int i = r - 1;
        while (i >= 0 && idx[i] == n - r + i) --i;
        if (i < 0) return true;
        ++idx[i];
        for (int j = i + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace topo_detail

// True iff every set of 2k columns of A is linearly independent. When the
// matrix has fewer than 2k columns, all columns together are tested instead.
inline bool is_k_identifiable(const PathLinkMatrix& a, int k) {
    if (k < 1) throw validation_error("is_k_identifiable: k must be >= 1");
    const int m = a.path_count(), n = a.link_count();
    const int take = std::min(2 * k, n);
    if (take > m) return false;  // more columns than rows cannot be independent
    return topo_detail::for_each_combination(n, take, [&](const std::vector<int>& cols) {
        std::vector<std::vector<BigInt>> sub(m, std::vector<BigInt>(cols.size()));
        for (int r = 0; r < m; ++r)
            for (std::size_t c = 0; c < cols.size(); ++c) sub[r][c] = a.entry(r, cols[c]) ? 1 : 0;
        return topo_detail::exact_rank(std::move(sub)) == static_cast<int>(cols.size());
    });
}

// D_j: intersection of all paths through j with complements of all paths
// avoiding j. Equals {j} exactly when A is 1-identifiable; a larger set is
// returned as-is so callers can see which links are indistinguishable.
inline std::set<int> link_intersection_identity(const PathLinkMatrix& a, int j) {
    if (j < 0 || j >= a.link_count()) throw validation_error("link index out of range");
    std::set<int> d;
    for (int l = 0; l < a.link_count(); ++l) d.insert(l);
    for (int g : a.paths_with_link(j)) {
        std::set<int> keep;
        for (int l : a.path_links(g))
            if (d.count(l)) keep.insert(l);
        d = std::move(keep);
    }
    for (int b : a.paths_without_link(j))
        for (int l : a.path_links(b)) d.erase(l);
    return d;
}

}  // namespace gnt
