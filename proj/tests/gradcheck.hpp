#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pfad/tensor.hpp"

namespace pfad::testing {

/// Central-difference gradient oracle, verification precision (f64).
/// `build` must reconstruct the scalar loss from the leaves' current
/// data; it runs independently of any previously recorded tape.
struct GradCheckResult {
    double max_rel_err = 0;
    double analytic_at_worst = 0, numeric_at_worst = 0;
};

inline GradCheckResult grad_check(std::vector<Tensor<double>> leaves,
                                  const std::function<Tensor<double>(Tape<double>*)>& build,
                                  double h = 1e-3) {
    for (auto& l : leaves) l.zero_grad();
    Tape<double> tape;
    Tensor<double> loss = build(&tape);
    tape.backward(loss);

    GradCheckResult res;
    for (auto& leaf : leaves) {
        for (std::int64_t i = 0; i < leaf.numel(); ++i) {
            const double orig = leaf.data()[static_cast<size_t>(i)];
            leaf.data()[static_cast<size_t>(i)] = orig + h;
            const double fp = build(nullptr).item();
            leaf.data()[static_cast<size_t>(i)] = orig - h;
            const double fm = build(nullptr).item();
            leaf.data()[static_cast<size_t>(i)] = orig;
            const double numeric = (fp - fm) / (2 * h);
            const double analytic = leaf.grad()[static_cast<size_t>(i)];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
            const double err = std::abs(analytic - numeric) / denom;
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                res.analytic_at_worst = analytic;
                res.numeric_at_worst = numeric;
            }
        }
    }
    return res;
}

}  // namespace pfad::testing
