#pragma once

// Central finite-difference gradient oracle. Independent of the tape: it
// only re-runs the forward function, so it can certify any analytic
// gradient the library produces.

#include <cmath>
#include <functional>
#include <vector>

#include "stillbench/tensor.hpp"

namespace sbtest {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

// forward() must recompute the scalar loss from scratch using the current
// contents of `params`. Analytic gradients are read from params[i].grad().
inline GradCheckResult gradcheck(const std::function<double()>& forward,
                                 std::vector<sb::Tensor>& params, double h = 1e-5) {
    GradCheckResult res;
    for (sb::Tensor& p : params) {
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double orig = p[i];
            p[i] = orig + h;
            const double fp = forward();
            p[i] = orig - h;
            const double fm = forward();
            p[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = p.grad()[i];
            const double abs_err = std::abs(numeric - analytic);
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
        }
    }
    return res;
}

}  // namespace sbtest
