#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gnt/errors.hpp"
#include "gnt/gh.hpp"
#include "gnt/rng.hpp"
#include "gnt/topology.hpp"

namespace gnt {

// Per-path delay samples. Paths are probed asynchronously: sample l of path
// i1 and sample l of path i2 share no link draw, even when the paths share
// a link.
struct ProbeSampleSet {
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> samples;  // samples[path][l]
};

// Fresh independent link draws per (path, sample); the substream derivation
// makes the output independent of evaluation order.
inline ProbeSampleSet simulate_paths(const PathLinkMatrix& a, const std::vector<GHModel>& models,
                                     const std::vector<std::uint64_t>& counts, std::uint64_t seed) {
    if (static_cast<int>(models.size()) != a.link_count())
        throw validation_error("simulate_paths: one model per link required");
    if (static_cast<int>(counts.size()) != a.path_count())
        throw validation_error("simulate_paths: one sample count per path required");
    for (const auto& m : models) gh_require_valid(m);
    for (std::uint64_t c : counts)
        if (c < 1) throw validation_error("simulate_paths: sample counts must be >= 1");

    ProbeSampleSet out;
    out.seed = seed;
    out.samples.resize(a.path_count());
    for (int i = 0; i < a.path_count(); ++i) {
        auto& dst = out.samples[i];
        dst.resize(counts[i]);
        const auto& links = a.path_links(i);
        for (std::uint64_t l = 0; l < counts[i]; ++l) {
            SubstreamRng rng(seed, static_cast<std::uint64_t>(i) + 1, l);
            double y = 0.0;
            for (int j : links) y += gh_invert_cdf(models[j], rng.next_double());
            dst[l] = y;
        }
    }
    return out;
}

// One file per path: a header line recording path id, sample count and seed,
// then one decimal delay per line.
inline void write_sample_file(const std::filesystem::path& file, int path_id,
                              const std::vector<double>& samples, std::uint64_t seed) {
    std::ofstream out(file);
    if (!out) throw validation_error("cannot open sample file for writing: " + file.string());
    out << "# path " << path_id << " L " << samples.size() << " seed " << seed << "\n";
    char buf[40];
    for (double v : samples) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
}

struct SampleFile {
    int path_id = -1;
    std::uint64_t seed = 0;
    std::vector<double> samples;
};

inline SampleFile read_sample_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw validation_error("cannot open sample file: " + file.string());
    SampleFile out;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# path ", 0) != 0)
        throw validation_error("sample file missing header: " + file.string());
    std::uint64_t declared = 0;
    if (std::sscanf(line.c_str(), "# path %d L %llu seed %llu", &out.path_id,
                    reinterpret_cast<unsigned long long*>(&declared),
                    reinterpret_cast<unsigned long long*>(&out.seed)) != 3)
        throw validation_error("malformed sample header: " + line);
    out.samples.reserve(declared);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.samples.push_back(std::stod(line));
    }
    if (out.samples.size() != declared)
        throw validation_error("sample file row count disagrees with header: " + file.string());
    return out;
}

}  // namespace gnt
