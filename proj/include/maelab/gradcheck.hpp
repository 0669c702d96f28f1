#pragma once

#include "maelab/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace maelab {

struct GradCheckOptions {
    double step = 1e-5;       // central-difference half step
    double tolerance = 1e-4;  // max allowed relative error
    /// Inputs with more elements than this get a seeded random coordinate
    /// subset instead of an exhaustive sweep.
    int64_t max_coords = 64;
    uint64_t seed = 0x5eedc0de;
    /// Coordinates with |x| below this are skipped; set it when the function
    /// has kinks (relu family) so the finite difference never straddles one.
    double skip_below = 0.0;
};

struct GradCheckFailure {
    size_t input;      // index into the inputs vector
    int64_t coord;     // flat element index within that input
    double analytic;
    double numeric;
    double rel_error;
};

struct GradCheckResult {
    bool ok = true;
    int64_t coords_checked = 0;
    double max_rel_error = 0.0;
    std::vector<GradCheckFailure> failures;

    std::string summary() const;
};

/// Compares tape gradients of a scalar-valued function against central finite
/// differences, coordinate by coordinate, over every input that requires
/// grad. relative error = |analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-6). Mismatches are collected in the result, not thrown.
///
/// `fn` must be a pure function of (tape, inputs): it is re-run many times
/// with tape == nullptr at perturbed input values.
GradCheckResult grad_check(
    const std::function<Tensor(Tape*, std::vector<Tensor>&)>& fn,
    std::vector<Tensor> inputs, const GradCheckOptions& options = {});

} // namespace maelab
