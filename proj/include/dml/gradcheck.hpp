#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dml/tensor.hpp"

namespace dml {

struct GradCheckResult {
    std::string component;
    double max_rel_err = 0.0;
    int points = 0;
};

/// Checks every loss and the two-head network against the central-difference
/// oracle at randomly drawn kink-free points (hinge arguments, ReLU
/// pre-activations and embedding norms are kept clear of their kinks;
/// non-conforming draws are resampled). For the network, a random subset of
/// coordinates from each parameter group is probed at every point.
///
/// `perturb` injects a bias into each analytic gradient before comparison; a
/// nonzero value must make the checks fail (detector self-test).
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int points_per_component = 100,
                                            double perturb = 0.0);

/// Largest error across components; below 1e-4 counts as a pass.
bool gradchecks_pass(const std::vector<GradCheckResult>& results, double tolerance = 1e-4);

} // namespace dml
