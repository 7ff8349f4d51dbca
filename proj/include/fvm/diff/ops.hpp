// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "fvm/diff/array.hpp"
#include "fvm/diff/tape.hpp"

// Differentiable ops over Tape-recorded arrays. Every op validates shapes up front and
// throws std::invalid_argument naming the offending shapes.
namespace fvm::diff {

// Linear algebra
Var matmul(Var a, Var b);  // [m x k] * [k x n]
Var transpose(Var x);      // rank 2

// Elementwise, equal shapes
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// y = scale * x + shift
Var affine(Var x, double scale, double shift);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log1p(Var x);
Var abs(Var x);
/// min(x, limit); the clamped region passes no gradient.
Var clamp_max(Var x, double limit);

enum class UnaryKind { relu, sigmoid, tanh };
enum class BinaryKind { add, mul };
Var elementwise(UnaryKind kind, Var x);
Var elementwise(BinaryKind kind, Var a, Var b);

// Broadcasting helpers for [rows x cols] matrices
Var add_row(Var x, Var bias);       // bias [cols] added to every row
Var mul_col(Var x, Var weights);    // weights [rows x 1] scale each row
Var scale_by(Var x, Var s);         // s has exactly one element

// Structural
Var reshape(Var x, Shape shape);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var channel_mean(Var x);  // [batch x channels x length] -> [batch x length]

// Reductions to a scalar {1}
Var sum(Var x);
Var mean(Var x);
/// Sum of x weighted by a constant mask of the same shape.
Var masked_sum(Var x, const Array& mask);

Var softmax_rows(Var x);
/// Each row divided by max(||row||_2, 1e-12).
Var l2_normalize(Var x);

constexpr double kNormFloor = 1e-12;

/// Cross-correlation with zero padding. `x` is [in x length] or [batch x in x length];
/// kernels [out x in x k]; bias [out]. Output keeps the rank of `x`.
Var conv1d(Var x, Var kernels, Var bias, std::size_t stride = 1, std::size_t padding = 0);

enum class NormMode { train, eval };

struct RunningStats {
    Array mean;
    Array var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    static RunningStats fresh(std::size_t features);
};

/// Batch normalization over features of [batch x features], or per channel of
/// [batch x channels x length]. Train mode normalizes with biased batch statistics and
/// blends unbiased variance into `stats`; eval mode uses `stats` only.
Var batchnorm1d(Var x, Var gamma, Var beta, RunningStats& stats, NormMode mode);

}  // namespace fvm::diff
