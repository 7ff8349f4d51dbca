// SPDX-License-Identifier: Apache-2.0
#include "fvm/diff/adam.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fvm::diff {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options) : options_(options) {
    if (!(options_.learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) || !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
        throw std::invalid_argument("adam: betas must lie in [0, 1)");
    }
    if (!(options_.epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
    slots_.reserve(params.size());
    for (Parameter* p : params) {
        if (!p) throw std::invalid_argument("adam: null parameter");
        slots_.push_back({p, Array(p->value.shape()), Array(p->value.shape())});
    }
}

void Adam::step() {
    if (steps_ == std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error("adam: step counter overflow");
    for (const auto& slot : slots_) {
        if (slot.param->grad.shape() != slot.param->value.shape()) {
            throw std::invalid_argument("adam: gradient of '" + slot.param->name + "' has shape " +
                                        to_string(slot.param->grad.shape()) + ", value has " +
                                        to_string(slot.param->value.shape()));
        }
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(options_.beta1, t);
    const double correction2 = 1.0 - std::pow(options_.beta2, t);
    for (auto& slot : slots_) {
        auto& value = slot.param->value;
        const auto& grad = slot.param->grad;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            slot.first_moment[i] = options_.beta1 * slot.first_moment[i] + (1.0 - options_.beta1) * g;
            slot.second_moment[i] = options_.beta2 * slot.second_moment[i] + (1.0 - options_.beta2) * g * g;
            const double m_hat = slot.first_moment[i] / correction1;
            const double v_hat = slot.second_moment[i] / correction2;
            value[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

void Adam::zero_grad() {
    for (auto& slot : slots_) slot.param->zero_grad();
}

}  // namespace fvm::diff
