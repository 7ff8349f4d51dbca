// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fvm/diff/array.hpp"
#include "fvm/diff/tape.hpp"

namespace fvm::diff {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst;  // "input 1[7]" or "<param name>[7]"
    double analytic = 0.0;
    double numeric = 0.0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double relative_error(double analytic, double numeric);

/// Builds a scalar from the given input handles on a fresh tape.
using InputFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences for every coordinate of every input.
/// `eps` must lie in (0, 1e-3]; a non-finite function value is rejected.
GradCheckReport grad_check(const InputFn& fn, const std::vector<Array>& inputs, double eps = 1e-6);

using ParamFn = std::function<Var(Tape&)>;

struct ParamCheckOptions {
    double eps = 1e-6;
    /// Coordinates checked per parameter; 0 checks all of them.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
};

/// Same comparison for parameters that `fn` binds through Tape::parameter. Parameter values
/// are perturbed in place and restored; their `grad` is overwritten.
GradCheckReport grad_check_parameters(const ParamFn& fn, const std::vector<Parameter*>& params,
                                      const ParamCheckOptions& options = {});

}  // namespace fvm::diff
