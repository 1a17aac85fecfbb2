#pragma once

#include <stdexcept>
#include <string>

namespace gnt {

// Bad inputs: rejected models, malformed configs, inconsistent grids.
struct validation_error : std::runtime_error {
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// The inputs were fine but the numerics gave up: singular systems,
// non-convergent inversions, exhausted retry budgets.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gnt
