#pragma once

// Finite-difference gradient oracle for the test suites. Kept independent of
// the tape implementation: it only evaluates forward passes.

#include <cmath>
#include <functional>
#include <vector>

namespace testsupport {

// Central finite differences of a scalar-valued function of a flat vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + h;
        double fp = f(x);
        x[i] = orig - h;
        double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Pass criterion: absolute agreement for near-zero gradients, relative otherwise.
inline double rel_err(double a, double b) {
    double d = std::abs(a - b);
    if (d < 1e-8) return 0.0;
    return d / (std::abs(a) + std::abs(b));
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
    return m;
}

} // namespace testsupport
