#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "regulargpt/autodiff.hpp"
#include "regulargpt/rng.hpp"

namespace regulargpt {

struct FdReport {
    double max_rel_err = 0.0;
    int64_t coords = 0;
};

// Central-difference check of analytic gradients, 64-bit only. run(true)
// must zero the grads, run forward+backward and return the loss; run(false)
// evaluates the loss without touching grads. Samples >= min_coords parameter
// coordinates (seeded) and reports max |analytic - central| / max(1, |central|).
inline FdReport finite_difference_check(std::vector<Parameter<double>*> params,
                                        const std::function<double(bool)>& run, double epsilon,
                                        int64_t min_coords, uint64_t seed) {
    if (epsilon < 1e-6 || epsilon > 1e-4)
        throw std::invalid_argument("finite_difference_check: epsilon out of [1e-6, 1e-4]");
    double base = run(true);
    if (!std::isfinite(base)) throw std::runtime_error("finite_difference_check: non-finite loss");

    std::vector<std::pair<size_t, size_t>> coords;  // (param index, flat index)
    int64_t total = 0;
    for (auto* p : params) total += p->value.numel();
    Rng rng = Rng(seed).fork(3);
    if (min_coords >= total) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (size_t j = 0; j < params[pi]->value.data.size(); ++j) coords.emplace_back(pi, j);
    } else {
        for (int64_t i = 0; i < min_coords; ++i) {
            int64_t flat = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
            for (size_t pi = 0; pi < params.size(); ++pi) {
                int64_t n = params[pi]->value.numel();
                if (flat < n) {
                    coords.emplace_back(pi, static_cast<size_t>(flat));
                    break;
                }
                flat -= n;
            }
        }
    }

    FdReport rep;
    rep.coords = static_cast<int64_t>(coords.size());
    for (auto [pi, j] : coords) {
        double* slot = &params[pi]->value.data[j];
        double analytic = params[pi]->grad.data[j];
        double orig = *slot;
        *slot = orig + epsilon;
        double up = run(false);
        *slot = orig - epsilon;
        double down = run(false);
        *slot = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("finite_difference_check: non-finite loss under perturbation");
        double central = (up - down) / (2.0 * epsilon);
        double err = std::abs(analytic - central) / std::max(1.0, std::abs(central));
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    return rep;
}

}  // namespace regulargpt
