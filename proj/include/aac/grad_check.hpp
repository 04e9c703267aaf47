#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aac/tensor.hpp"

namespace aac {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "input#index" of the worst coordinate
    bool passed = false;
};

/// Compares the analytic gradient of a scalar function against central
/// differences at every coordinate of `inputs`.
///
/// `f` must rebuild its graph on each call from the current values of the
/// inputs (which are leaves with requires_grad set). The relative error of a
/// coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor) with
/// floor = 1e-6 * max(1, |f|). Central differences cannot resolve gradients
/// much below ulp(f)/eps, so coordinates whose true gradient is zero (e.g.
/// attention key biases) would otherwise report pure rounding noise.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps = 1e-5,
                           double rtol = 1e-4);

struct GradSuiteRow {
    std::string name;
    std::uint64_t seed = 0;
    GradCheckReport report;
};

/// Runs grad_check over every primitive and the decoder-plus-both-heads
/// composite for `n_seeds` seeds. Used by the `gradcheck` subcommand and the
/// acceptance suite.
std::vector<GradSuiteRow> run_grad_suite(std::size_t n_seeds, double eps = 1e-5, double rtol = 1e-4);

}  // namespace aac
