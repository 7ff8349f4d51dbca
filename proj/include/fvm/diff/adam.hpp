// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fvm/diff/tape.hpp"

namespace fvm::diff {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
///
/// Moment buffers start at zero. Parameters must outlive the optimizer and keep their
/// shapes; `step` reads each parameter's accumulated `grad`.
class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, AdamOptions options = {});

    void step();
    void zero_grad();

    std::uint64_t step_count() const noexcept { return steps_; }
    const AdamOptions& options() const noexcept { return options_; }
    std::size_t parameter_count() const noexcept { return slots_.size(); }

    // Exposed for tests: lets the overflow guard be exercised without 2^64 steps.
    void set_step_count(std::uint64_t steps) noexcept { steps_ = steps; }

private:
    struct Slot {
        Parameter* param;
        Array first_moment;
        Array second_moment;
    };

    std::vector<Slot> slots_;
    AdamOptions options_;
    std::uint64_t steps_ = 0;
};

}  // namespace fvm::diff
