#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "samt/autograd.hpp"

namespace samt::testing {

// Exhaustive maximum bipartite matching by recursion over left nodes; the
// independent reference for the production matcher. Exponential, keep
// instances small.
int brute_force_max_matching(int n_left, int n_right,
                             const std::vector<std::vector<int>>& adj);

// Direct windowed Fourier projection at one frequency: the reference for
// spectral magnitudes (O(N) per probe, no shared code with the transform
// under test).
double direct_tone_magnitude(std::span<const float> samples, int sample_rate,
                             double frequency, std::span<const double> window,
                             int offset);

// Central finite difference d loss / d param[index], rebuilding the loss for
// every probe. Use with double-precision graphs.
double numeric_gradient(const std::function<double()>& loss_value,
                        double* slot, double h = 1e-5);

}  // namespace samt::testing
