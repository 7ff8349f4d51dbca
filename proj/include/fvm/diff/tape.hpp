// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>

#include "fvm/diff/array.hpp"

namespace fvm::diff {

/// A learnable array together with its accumulated gradient.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Array value);

    std::string name;
    Array value;
    Array grad;
    bool trainable = true;

    void zero_grad();
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    Tape& tape() const;
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records operations in execution order and replays their backward rules in reverse.
///
/// Nodes are appended as ops run, so the recording order is already topological. A tape
/// belongs to one forward pass: `backward` may run once, after which the tape is spent.
class Tape {
public:
    /// Called with the gradient of the node's output; accumulates into input gradients.
    using BackwardFn = std::function<void(const Array& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Array value);
    Var variable(Array value);
    /// Trainable parameters become gradient leaves whose gradient is added to `p.grad`
    /// by `backward`. Non-trainable parameters are recorded as constants. The parameter
    /// value is referenced, not copied, and must stay unchanged while the tape is used.
    Var parameter(Parameter& p);

    /// While disabled, every parameter is recorded as a constant regardless of `trainable`.
    void set_parameter_tracking(bool enabled) noexcept { track_parameters_ = enabled; }
    bool parameter_tracking() const noexcept { return track_parameters_; }

    /// Appends an op output. The backward rule is kept only if some input needs a gradient.
    Var record(Array value, std::initializer_list<Var> inputs, BackwardFn backward);

    const Array& value(const Var& v) const;
    bool requires_grad(const Var& v) const;

    /// Gradient buffer of `v`, zero-initialised on first use; nullptr when `v` needs no gradient.
    Array* grad_sink(const Var& v);
    /// Gradient of `v` after backward; nullptr when none reached it.
    const Array* grad(const Var& v) const;

    void backward(const Var& loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t backward_visits() const noexcept { return visits_; }

private:
    struct Node {
        Array owned;
        const Array* external = nullptr;
        Array grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;

        const Array& value() const { return external ? *external : owned; }
    };

    Node& node(const Var& v);
    const Node& node(const Var& v) const;

    std::deque<Node> nodes_;
    bool spent_ = false;
    bool track_parameters_ = true;
    std::size_t visits_ = 0;
};

/// Disables parameter tracking on a tape for the lifetime of the scope.
class NoGradScope {
public:
    explicit NoGradScope(Tape& tape) : tape_(tape), previous_(tape.parameter_tracking()) {
        tape_.set_parameter_tracking(false);
    }
    ~NoGradScope() { tape_.set_parameter_tracking(previous_); }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape& tape_;
    bool previous_;
};

}  // namespace fvm::diff
