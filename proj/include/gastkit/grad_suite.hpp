#pragma once

// Finite-difference checks of every differentiable op on small random shapes
// and of the two full models.

#include <cstdint>
#include <string>
#include <vector>

namespace gastkit::nn {

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    double analytic = 0.0;  // at the worst coordinate
    double numeric = 0.0;
};

/// One entry per (op, differentiated input).
std::vector<GradCheckEntry> op_gradient_checks(std::uint64_t seed);

/// Desk-scale VAE loss and classifier cross-entropy on a batch of two, one
/// entry per trainable tensor plus the input; `coords` sampled coordinates
/// per tensor.
std::vector<GradCheckEntry> model_gradient_checks(std::uint64_t seed, std::size_t coords = 4);

}  // namespace gastkit::nn
