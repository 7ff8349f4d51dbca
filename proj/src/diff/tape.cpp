// SPDX-License-Identifier: Apache-2.0
#include "fvm/diff/tape.hpp"

#include <stdexcept>

namespace fvm::diff {

Parameter::Parameter(std::string name_, Array value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void Parameter::zero_grad() {
    if (grad.shape() != value.shape()) {
        grad = Array(value.shape());
    } else {
        grad.fill(0.0);
    }
}

const Array& Var::value() const { return tape().value(*this); }

Tape& Var::tape() const {
    if (!tape_) throw std::logic_error("use of an unbound Var");
    return *tape_;
}

bool Var::requires_grad() const { return tape().requires_grad(*this); }

Tape::Node& Tape::node(const Var& v) {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Var does not belong to this tape");
    return nodes_[v.id_];
}

const Tape::Node& Tape::node(const Var& v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Var does not belong to this tape");
    return nodes_[v.id_];
}

Var Tape::constant(Array value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::variable(Array value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
    if (p.value.empty()) throw std::invalid_argument("parameter '" + p.name + "' has no value");
    Node n;
    n.external = &p.value;
    if (p.trainable && track_parameters_) {
        n.requires_grad = true;
        n.param = &p;
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(Array value, std::initializer_list<Var> inputs, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    for (const auto& in : inputs) {
        if (node(in).requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const Array& Tape::value(const Var& v) const { return node(v).value(); }

bool Tape::requires_grad(const Var& v) const { return node(v).requires_grad; }

Array* Tape::grad_sink(const Var& v) {
    auto& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Array(n.value().shape());
    return &n.grad;
}

const Array* Tape::grad(const Var& v) const {
    const auto& n = node(v);
    return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(const Var& loss) {
    if (spent_) throw std::logic_error("backward already ran on this tape");
    auto& root = node(loss);
    if (root.value().size() != 1) {
        throw std::invalid_argument("backward needs a scalar loss, got shape " + to_string(root.value().shape()));
    }
    spent_ = true;
    if (!root.requires_grad) return;
    root.grad = Array(root.value().shape(), 1.0);

    for (std::size_t i = nodes_.size(); i-- > 0;) {
        auto& n = nodes_[i];
        if (n.grad.empty()) continue;
        ++visits_;
        if (n.backward) n.backward(n.grad);
        if (n.param) {
            auto& pg = n.param->grad;
            if (pg.shape() != n.grad.shape()) pg = Array(n.grad.shape());
            for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        }
    }
}

}  // namespace fvm::diff
