#pragma once

#include <cmath>
#include <functional>
#include <vector>

// Shared test utilities: central finite differences and relative-error
// comparison used by every gradient test in the suite.

namespace testutil {

// Central difference of a scalar functional w.r.t. one coordinate,
// evaluated by mutating *x in place and restoring it.
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-4) {
    const double x0 = *x;
    *x = x0 + h;
    const double fp = f();
    *x = x0 - h;
    const double fm = f();
    *x = x0;
    return (fp - fm) / (2.0 * h);
}

// Relative error with an absolute floor so that near-zero pairs compare
// as equal instead of dividing by noise.
inline double rel_err(double a, double b, double floor = 1e-4) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

struct GradCheckStats {
    int total = 0;
    int bad = 0;       // rel err >= tol
    double worst = 0;  // max rel err seen

    void add(double analytic, double numeric, double tol, double floor = 1e-4) {
        const double e = rel_err(analytic, numeric, floor);
        ++total;
        if (e >= tol) ++bad;
        if (e > worst) worst = e;
    }
    double pass_fraction() const { return total == 0 ? 1.0 : 1.0 - double(bad) / double(total); }
};

}  // namespace testutil
