// SPDX-License-Identifier: Apache-2.0
#include "fvm/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fvm::diff {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

namespace {

void validate_eps(double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in (0, 1e-3]");
}

double checked_scalar(const Var& out) {
    if (out.value().size() != 1) {
        throw std::invalid_argument("grad_check: function must return a scalar, got shape " + to_string(out.shape()));
    }
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw std::domain_error("grad_check: function produced a non-finite value");
    return v;
}

void record(GradCheckReport& report, double analytic, double numeric, std::string where) {
    ++report.coordinates;
    const double err = relative_error(analytic, numeric);
    if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst = std::move(where);
        report.analytic = analytic;
        report.numeric = numeric;
    }
}

}  // namespace

GradCheckReport grad_check(const InputFn& fn, const std::vector<Array>& inputs, double eps) {
    validate_eps(eps);

    std::vector<Array> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const auto& in : inputs) vars.push_back(tape.variable(in));
        Var out = fn(tape, vars);
        checked_scalar(out);
        tape.backward(out);
        for (const auto& v : vars) {
            const Array* g = tape.grad(v);
            analytic.push_back(g ? *g : Array(v.shape()));
        }
    }

    const auto evaluate = [&fn](const std::vector<Array>& point) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(point.size());
        for (const auto& in : point) vars.push_back(tape.constant(in));
        return checked_scalar(fn(tape, vars));
    };

    GradCheckReport report;
    std::vector<Array> point = inputs;
    for (std::size_t i = 0; i < point.size(); ++i) {
        for (std::size_t k = 0; k < point[i].size(); ++k) {
            const double saved = point[i][k];
            point[i][k] = saved + eps;
            const double up = evaluate(point);
            point[i][k] = saved - eps;
            const double down = evaluate(point);
            point[i][k] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            record(report, analytic[i][k], numeric, "input " + std::to_string(i) + "[" + std::to_string(k) + "]");
        }
    }
    return report;
}

GradCheckReport grad_check_parameters(const ParamFn& fn, const std::vector<Parameter*>& params,
                                      const ParamCheckOptions& options) {
    validate_eps(options.eps);

    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var out = fn(tape);
        checked_scalar(out);
        tape.backward(out);
    }
    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    const auto evaluate = [&fn]() {
        Tape tape;
        return checked_scalar(fn(tape));
    };

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        std::vector<std::size_t> coords(p.value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coordinates != 0 && coords.size() > options.max_coordinates) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coordinates);
            std::sort(coords.begin(), coords.end());
        }
        for (auto k : coords) {
            const double saved = p.value[k];
            p.value[k] = saved + options.eps;
            const double up = evaluate();
            p.value[k] = saved - options.eps;
            const double down = evaluate();
            p.value[k] = saved;
            const double numeric = (up - down) / (2.0 * options.eps);
            record(report, analytic[i][k], numeric, p.name + "[" + std::to_string(k) + "]");
        }
    }
    return report;
}

}  // namespace fvm::diff
