// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "fvm/diff/array.hpp"
#include "fvm/diff/tape.hpp"

namespace fvm::loss {

enum class HeadActivation { sigmoid, identity, relu };

HeadActivation parse_head_activation(std::string_view name);
std::string_view to_string(HeadActivation activation);

struct LossConfig {
    double alpha = 2.0;
    double beta = 50.0;
    double theta = 0.6;
    /// False drops the exponential pair terms and leaves only the orthogonal term.
    bool pair_weighting = true;
    HeadActivation activation = HeadActivation::sigmoid;

    /// Throws std::invalid_argument on alpha <= 0, beta <= 0 or theta outside [0, 1].
    void validate() const;
};

/// Ordered-pair masks over a batch; the diagonal belongs to neither.
struct PairMasks {
    diff::Array positive;
    diff::Array negative;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

PairMasks pair_masks(std::span<const std::size_t> identities);

/// Z = l2_normalize(act(X W + b)), S = Z Z^T. `weight` is [d x d], `bias` [d].
diff::Var similarity_matrix(diff::Var embeddings, diff::Var weight, diff::Var bias,
                            HeadActivation activation = HeadActivation::sigmoid);

struct PairTerms {
    diff::Var l_plus;
    diff::Var l_minus;
};

/// Exponents are clamped to at most 60 before exponentiation.
PairTerms weighted_pair_losses(diff::Var similarity, const PairMasks& masks, const LossConfig& config);

struct OrthogonalTerm {
    diff::Var value;
    double mean_positive = 1.0;
    double mean_negative = 0.0;
};

/// (2 - mean_pos(S)) + 0.3 |mean_neg(S)|. A missing pair class falls back to mean 1
/// (positives) or 0 (negatives) with a logged warning.
OrthogonalTerm orthogonal_term(diff::Var similarity, const PairMasks& masks);

struct LossDiagnostics {
    double l_plus = 0.0;
    double l_minus = 0.0;
    double orthogonal = 0.0;
    double mean_positive = 0.0;
    double mean_negative = 0.0;
};

struct LossResult {
    diff::Var loss;
    LossDiagnostics diagnostics;
};

/// L = log(1 + L+) / alpha + log(1 + L-) / beta + O.
LossResult total_loss(diff::Var embeddings, std::span<const std::size_t> identities, diff::Var weight,
                      diff::Var bias, const LossConfig& config);

}  // namespace fvm::loss
