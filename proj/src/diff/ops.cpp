// SPDX-License-Identifier: Apache-2.0
#include "fvm/diff/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fvm::diff {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Array& a) {
    return {a.data().data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1))};
}

MutMap as_matrix(Array& a) {
    return {a.data().data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1))};
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
    if (x.value().rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                    to_string(x.shape()));
    }
}

void require_same_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a.shape()[1] != b.shape()[0]) shape_error("matmul", a.shape(), b.shape());
    Array out({a.shape()[0], b.shape()[1]});
    as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
    return a.tape().record(std::move(out), {a, b}, [a, b](const Array& g) {
        Tape& tape = a.tape();
        if (Array* ga = tape.grad_sink(a)) as_matrix(*ga).noalias() += as_matrix(g) * as_matrix(b.value()).transpose();
        if (Array* gb = tape.grad_sink(b)) as_matrix(*gb).noalias() += as_matrix(a.value()).transpose() * as_matrix(g);
    });
}

Var transpose(Var x) {
    require_rank("transpose", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    Array out({cols, rows});
    as_matrix(out) = as_matrix(x.value()).transpose();
    return x.tape().record(std::move(out), {x}, [x](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x)) as_matrix(*gx) += as_matrix(g).transpose();
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
    Array out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](const Array& g) {
        Tape& tape = a.tape();
        if (Array* ga = tape.grad_sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Array* gb = tape.grad_sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
    Array out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](const Array& g) {
        Tape& tape = a.tape();
        if (Array* ga = tape.grad_sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Array* gb = tape.grad_sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    Array out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](const Array& g) {
        Tape& tape = a.tape();
        if (Array* ga = tape.grad_sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
        if (Array* gb = tape.grad_sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    });
}

Var affine(Var x, double scale, double shift) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x.value()[i] + shift;
    return x.tape().record(std::move(out), {x}, [x, scale](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += scale * g[i];
    });
}

Var relu(Var x) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.value()[i]);
    return x.tape().record(std::move(out), {x}, [x](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x.value()[i] > 0.0) (*gx)[i] += g[i];
    });
}

namespace {

double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// Records `out` with a backward rule scaling by a derivative evaluated at the input.
template <typename Deriv>
Var unary_op(Var x, Array out, Deriv deriv) {
    return x.tape().record(std::move(out), {x}, [x, deriv](const Array& g) {
        Array* gx = x.tape().grad_sink(x);
        if (!gx) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * deriv(x.value()[i]);
    });
}

}  // namespace

Var sigmoid(Var x) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.value()[i]);
    return unary_op(x, std::move(out), [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 - s);
    });
}

Var tanh(Var x) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
    return unary_op(x, std::move(out), [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
    });
}

Var exp(Var x) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.value()[i]);
    return unary_op(x, std::move(out), [](double v) { return std::exp(v); });
}

Var log1p(Var x) {
    for (double v : x.value().data()) {
        if (!(v > -1.0)) throw std::domain_error("log1p: argument must exceed -1");
    }
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(x.value()[i]);
    return unary_op(x, std::move(out), [](double v) { return 1.0 / (1.0 + v); });
}

Var abs(Var x) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.value()[i]);
    return unary_op(x, std::move(out), [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var clamp_max(Var x, double limit) {
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(x.value()[i], limit);
    return unary_op(x, std::move(out), [limit](double v) { return v < limit ? 1.0 : 0.0; });
}

Var elementwise(UnaryKind kind, Var x) {
    switch (kind) {
        case UnaryKind::relu: return relu(x);
        case UnaryKind::sigmoid: return sigmoid(x);
        case UnaryKind::tanh: return tanh(x);
    }
    throw std::invalid_argument("unknown unary kind");
}

Var elementwise(BinaryKind kind, Var a, Var b) {
    switch (kind) {
        case BinaryKind::add: return add(a, b);
        case BinaryKind::mul: return mul(a, b);
    }
    throw std::invalid_argument("unknown binary kind");
}

Var add_row(Var x, Var bias) {
    require_same_tape(x, bias);
    require_rank("add_row", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    if (bias.value().size() != cols) shape_error("add_row", x.shape(), bias.shape());
    Array out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.value().at(r, c) + bias.value()[c];
    return x.tape().record(std::move(out), {x, bias}, [x, bias, rows, cols](const Array& g) {
        Tape& tape = x.tape();
        if (Array* gx = tape.grad_sink(x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        if (Array* gb = tape.grad_sink(bias))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += g.at(r, c);
    });
}

Var mul_col(Var x, Var weights) {
    require_same_tape(x, weights);
    require_rank("mul_col", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    if (weights.value().size() != rows) shape_error("mul_col", x.shape(), weights.shape());
    Array out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.value().at(r, c) * weights.value()[r];
    return x.tape().record(std::move(out), {x, weights}, [x, weights, rows, cols](const Array& g) {
        Tape& tape = x.tape();
        if (Array* gx = tape.grad_sink(x))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += g.at(r, c) * weights.value()[r];
        if (Array* gw = tape.grad_sink(weights))
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += g.at(r, c) * x.value().at(r, c);
                (*gw)[r] += acc;
            }
    });
}

Var scale_by(Var x, Var s) {
    require_same_tape(x, s);
    if (s.value().size() != 1) shape_error("scale_by", x.shape(), s.shape());
    const double k = s.value()[0];
    Array out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * k;
    return x.tape().record(std::move(out), {x, s}, [x, s](const Array& g) {
        Tape& tape = x.tape();
        if (Array* gx = tape.grad_sink(x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * s.value()[0];
        if (Array* gs = tape.grad_sink(s)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
            (*gs)[0] += acc;
        }
    });
}

Var reshape(Var x, Shape shape) {
    if (numel(shape) != x.value().size()) shape_error("reshape", x.shape(), shape);
    Array out = x.value().reshaped(std::move(shape));
    return x.tape().record(std::move(out), {x}, [x](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    });
}

Var concat_cols(Var a, Var b) {
    require_same_tape(a, b);
    require_rank("concat_cols", a, 2);
    require_rank("concat_cols", b, 2);
    const auto rows = a.shape()[0];
    if (b.shape()[0] != rows) shape_error("concat_cols", a.shape(), b.shape());
    const auto ca = a.shape()[1];
    const auto cb = b.shape()[1];
    Array out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = a.value().at(r, c);
        for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = b.value().at(r, c);
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, rows, ca, cb](const Array& g) {
        Tape& tape = a.tape();
        if (Array* ga = tape.grad_sink(a))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < ca; ++c) ga->at(r, c) += g.at(r, c);
        if (Array* gb = tape.grad_sink(b))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cb; ++c) gb->at(r, c) += g.at(r, ca + c);
    });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
    require_rank("slice_cols", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    if (count == 0 || start + count > cols) {
        throw std::invalid_argument("slice_cols: columns [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of range for shape " + to_string(x.shape()));
    }
    Array out({rows, count});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out.at(r, c) = x.value().at(r, start + c);
    return x.tape().record(std::move(out), {x}, [x, rows, start, count](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < count; ++c) gx->at(r, start + c) += g.at(r, c);
    });
}

Var channel_mean(Var x) {
    require_rank("channel_mean", x, 3);
    const auto batch = x.shape()[0];
    const auto channels = x.shape()[1];
    const auto length = x.shape()[2];
    const double inv = 1.0 / static_cast<double>(channels);
    Array out({batch, length});
    const auto& xv = x.value();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t l = 0; l < length; ++l) out.at(b, l) += xv[(b * channels + c) * length + l] * inv;
    return x.tape().record(std::move(out), {x}, [x, batch, channels, length, inv](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t l = 0; l < length; ++l) (*gx)[(b * channels + c) * length + l] += g.at(b, l) * inv;
    });
}

Var sum(Var x) {
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    return x.tape().record(Array::scalar(acc), {x}, [x](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g[0];
    });
}

Var mean(Var x) { return affine(sum(x), 1.0 / static_cast<double>(x.value().size()), 0.0); }

Var masked_sum(Var x, const Array& mask) {
    if (mask.shape() != x.shape()) shape_error("masked_sum", x.shape(), mask.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0) acc += mask[i] * x.value()[i];
    return x.tape().record(Array::scalar(acc), {x}, [x, mask](const Array& g) {
        if (Array* gx = x.tape().grad_sink(x))
            for (std::size_t i = 0; i < mask.size(); ++i) (*gx)[i] += g[0] * mask[i];
    });
}

Var softmax_rows(Var x) {
    require_rank("softmax_rows", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    Array out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double peak = x.value().at(r, 0);
        for (std::size_t c = 1; c < cols; ++c) peak = std::max(peak, x.value().at(r, c));
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out.at(r, c) = std::exp(x.value().at(r, c) - peak);
            total += out.at(r, c);
        }
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
    }
    Array y = out;
    return x.tape().record(std::move(out), {x}, [x, rows, cols, y = std::move(y)](const Array& g) {
        Array* gx = x.tape().grad_sink(x);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
    });
}

Var l2_normalize(Var x) {
    require_rank("l2_normalize", x, 2);
    const auto rows = x.shape()[0];
    const auto cols = x.shape()[1];
    std::vector<double> norms(rows);
    Array out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sq += x.value().at(r, c) * x.value().at(r, c);
        norms[r] = std::max(std::sqrt(sq), kNormFloor);
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.value().at(r, c) / norms[r];
    }
    Array normalized = out;
    return x.tape().record(std::move(out), {x}, [x, rows, cols, norms, y = std::move(normalized)](const Array& g) {
        Array* gx = x.tape().grad_sink(x);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double n = norms[r];
            if (n > kNormFloor) {
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += y.at(r, c) * g.at(r, c);
                for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += (g.at(r, c) - y.at(r, c) * dot) / n;
            } else {
                for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += g.at(r, c) / n;
            }
        }
    });
}

Var conv1d(Var x, Var kernels, Var bias, std::size_t stride, std::size_t padding) {
    require_same_tape(x, kernels);
    require_same_tape(x, bias);
    if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
    const bool batched = x.value().rank() == 3;
    if (!batched && x.value().rank() != 2) {
        throw std::invalid_argument("conv1d: input must be [in x length] or [batch x in x length], got " +
                                    to_string(x.shape()));
    }
    require_rank("conv1d kernels", kernels, 3);
    const auto batch = batched ? x.shape()[0] : 1;
    const auto in_ch = x.shape()[batched ? 1 : 0];
    const auto length = x.shape()[batched ? 2 : 1];
    const auto out_ch = kernels.shape()[0];
    const auto k = kernels.shape()[2];
    if (kernels.shape()[1] != in_ch) shape_error("conv1d", x.shape(), kernels.shape());
    if (bias.value().size() != out_ch) shape_error("conv1d bias", kernels.shape(), bias.shape());
    if (length + 2 * padding < k) {
        throw std::invalid_argument("conv1d: kernel of length " + std::to_string(k) + " exceeds padded input length " +
                                    std::to_string(length + 2 * padding));
    }
    const auto out_len = (length + 2 * padding - k) / stride + 1;

    const auto& xv = x.value();
    const auto& wv = kernels.value();
    const auto& bv = bias.value();
    Array out(batched ? Shape{batch, out_ch, out_len} : Shape{out_ch, out_len});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < out_ch; ++o) {
            for (std::size_t t = 0; t < out_len; ++t) {
                double acc = bv[o];
                for (std::size_t i = 0; i < in_ch; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        const auto pos = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
                        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
                        acc += wv[(o * in_ch + i) * k + j] * xv[(b * in_ch + i) * length + static_cast<std::size_t>(pos)];
                    }
                }
                out[(b * out_ch + o) * out_len + t] = acc;
            }
        }
    }
    return x.tape().record(std::move(out), {x, kernels, bias}, [=](const Array& g) {
        Tape& tape = x.tape();
        Array* gx = tape.grad_sink(x);
        Array* gw = tape.grad_sink(kernels);
        Array* gb = tape.grad_sink(bias);
        const auto& xv = x.value();
        const auto& wv = kernels.value();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < out_ch; ++o) {
                for (std::size_t t = 0; t < out_len; ++t) {
                    const double go = g[(b * out_ch + o) * out_len + t];
                    if (gb) (*gb)[o] += go;
                    for (std::size_t i = 0; i < in_ch; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const auto pos =
                                static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
                            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
                            const auto xi = (b * in_ch + i) * length + static_cast<std::size_t>(pos);
                            const auto wi = (o * in_ch + i) * k + j;
                            if (gw) (*gw)[wi] += go * xv[xi];
                            if (gx) (*gx)[xi] += go * wv[wi];
                        }
                    }
                }
            }
        }
    });
}

RunningStats RunningStats::fresh(std::size_t features) {
    RunningStats s;
    s.mean = Array({features}, 0.0);
    s.var = Array({features}, 1.0);
    return s;
}

Var batchnorm1d(Var x, Var gamma, Var beta, RunningStats& stats, NormMode mode) {
    require_same_tape(x, gamma);
    require_same_tape(x, beta);
    const auto rank = x.value().rank();
    if (rank != 2 && rank != 3) {
        throw std::invalid_argument("batchnorm1d: expected [batch x features] or [batch x channels x length], got " +
                                    to_string(x.shape()));
    }
    const auto batch = x.shape()[0];
    const auto features = x.shape()[1];
    const auto length = rank == 3 ? x.shape()[2] : 1;
    if (gamma.value().size() != features) shape_error("batchnorm1d gamma", x.shape(), gamma.shape());
    if (beta.value().size() != features) shape_error("batchnorm1d beta", x.shape(), beta.shape());
    if (stats.mean.size() != features || stats.var.size() != features) {
        throw std::invalid_argument("batchnorm1d: running statistics sized for " + std::to_string(stats.mean.size()) +
                                    " features, input has " + std::to_string(features));
    }
    if (mode == NormMode::train && batch < 2) {
        throw std::invalid_argument("batchnorm1d: train mode needs a batch of at least 2, got " + std::to_string(batch));
    }

    const auto index = [features, length](std::size_t b, std::size_t f, std::size_t l) {
        return (b * features + f) * length + l;
    };
    const auto count = static_cast<double>(batch * length);
    const double eps = stats.epsilon;
    const auto& xv = x.value();

    std::vector<double> mu(features), inv_std(features);
    if (mode == NormMode::train) {
        for (std::size_t f = 0; f < features; ++f) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < length; ++l) s += xv[index(b, f, l)];
            mu[f] = s / count;
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t l = 0; l < length; ++l) {
                    const double d = xv[index(b, f, l)] - mu[f];
                    sq += d * d;
                }
            const double biased = sq / count;
            inv_std[f] = 1.0 / std::sqrt(biased + eps);
            const double unbiased = sq / (count - 1.0);
            stats.mean[f] = (1.0 - stats.momentum) * stats.mean[f] + stats.momentum * mu[f];
            stats.var[f] = (1.0 - stats.momentum) * stats.var[f] + stats.momentum * unbiased;
        }
    } else {
        for (std::size_t f = 0; f < features; ++f) {
            mu[f] = stats.mean[f];
            inv_std[f] = 1.0 / std::sqrt(stats.var[f] + eps);
        }
    }

    Array normalized(x.shape());
    Array out(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < features; ++f)
            for (std::size_t l = 0; l < length; ++l) {
                const auto i = index(b, f, l);
                normalized[i] = (xv[i] - mu[f]) * inv_std[f];
                out[i] = gamma.value()[f] * normalized[i] + beta.value()[f];
            }

    return x.tape().record(
        std::move(out), {x, gamma, beta},
        [=, xhat = std::move(normalized)](const Array& g) {
            Tape& tape = x.tape();
            Array* gx = tape.grad_sink(x);
            Array* gg = tape.grad_sink(gamma);
            Array* gb = tape.grad_sink(beta);
            for (std::size_t f = 0; f < features; ++f) {
                double sum_g = 0.0;
                double sum_gx = 0.0;
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t l = 0; l < length; ++l) {
                        const auto i = index(b, f, l);
                        sum_g += g[i];
                        sum_gx += g[i] * xhat[i];
                    }
                if (gg) (*gg)[f] += sum_gx;
                if (gb) (*gb)[f] += sum_g;
                if (!gx) continue;
                const double scale = gamma.value()[f] * inv_std[f];
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t l = 0; l < length; ++l) {
                        const auto i = index(b, f, l);
                        if (mode == NormMode::train) {
                            (*gx)[i] += scale * (g[i] - sum_g / count - xhat[i] * sum_gx / count);
                        } else {
                            (*gx)[i] += scale * g[i];
                        }
                    }
            }
        });
}

}  // namespace fvm::diff
