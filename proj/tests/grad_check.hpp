#pragma once

// Shared finite-difference gradient comparison for the test suites: relative
// error within `rel_tol` for entries above `abs_floor`, absolute agreement
// below that.

#include <cmath>
#include <cstddef>
#include <functional>

#include "otalign/numerics.hpp"

namespace otalign::testutil {

struct GradCheckResult {
    bool ok = true;
    double worst_rel = 0.0;
    std::size_t worst_index = 0;
};

inline GradCheckResult compare_gradients(const Vector& analytic, const Vector& numeric, double rel_tol = 1e-4,
                                         double abs_floor = 1e-6) {
    GradCheckResult result;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double a = analytic[i];
        double n = numeric[i];
        double mag = std::max(std::abs(a), std::abs(n));
        if (mag < abs_floor) continue;
        double rel = std::abs(a - n) / mag;
        if (rel > result.worst_rel) {
            result.worst_rel = rel;
            result.worst_index = i;
        }
        if (rel > rel_tol) result.ok = false;
    }
    return result;
}

// Central-difference gradient of f over a flat parameter vector.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
    return finite_diff_grad(f, x, h);
}

} // namespace otalign::testutil
