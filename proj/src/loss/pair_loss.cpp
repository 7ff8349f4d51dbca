// SPDX-License-Identifier: Apache-2.0
#include "fvm/loss/pair_loss.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "fvm/diff/ops.hpp"

namespace fvm::loss {

using diff::Array;
using diff::Var;

namespace {

constexpr double kExponentCap = 60.0;
constexpr double kNegativeWeight = 0.3;

}  // namespace

HeadActivation parse_head_activation(std::string_view name) {
    if (name == "sigmoid") return HeadActivation::sigmoid;
    if (name == "identity") return HeadActivation::identity;
    if (name == "relu") return HeadActivation::relu;
    throw std::invalid_argument("unknown head activation '" + std::string(name) + "'");
}

std::string_view to_string(HeadActivation activation) {
    switch (activation) {
        case HeadActivation::sigmoid: return "sigmoid";
        case HeadActivation::identity: return "identity";
        case HeadActivation::relu: return "relu";
    }
    return "sigmoid";
}

void LossConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("loss: alpha must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("loss: beta must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("loss: theta must lie in [0, 1]");
}

PairMasks pair_masks(std::span<const std::size_t> identities) {
    const std::size_t n = identities.size();
    if (n < 2) throw std::invalid_argument("pair_masks: need at least 2 samples, got " + std::to_string(n));
    PairMasks masks{Array({n, n}), Array({n, n})};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (identities[i] == identities[j]) {
                masks.positive.at(i, j) = 1.0;
                ++masks.positives;
            } else {
                masks.negative.at(i, j) = 1.0;
                ++masks.negatives;
            }
        }
    }
    return masks;
}

Var similarity_matrix(Var embeddings, Var weight, Var bias, HeadActivation activation) {
    if (embeddings.shape().size() != 2 || embeddings.shape()[0] < 2) {
        throw std::invalid_argument("similarity_matrix: need a [B x d] batch with B >= 2, got " +
                                    diff::to_string(embeddings.shape()));
    }
    Var z = diff::add_row(diff::matmul(embeddings, weight), bias);
    switch (activation) {
        case HeadActivation::sigmoid: z = diff::sigmoid(z); break;
        case HeadActivation::relu: z = diff::relu(z); break;
        case HeadActivation::identity: break;
    }
    z = diff::l2_normalize(z);
    return diff::matmul(z, diff::transpose(z));
}

PairTerms weighted_pair_losses(Var similarity, const PairMasks& masks, const LossConfig& config) {
    if (similarity.shape() != masks.positive.shape()) {
        throw std::invalid_argument("weighted_pair_losses: similarity " + diff::to_string(similarity.shape()) +
                                    " does not match masks " + diff::to_string(masks.positive.shape()));
    }
    if (masks.positives == 0 && masks.negatives == 0) {
        throw std::invalid_argument("weighted_pair_losses: batch has no positive and no negative pairs");
    }
    // exp(-alpha (S - theta)) and exp(beta (S - theta))
    Var pos = diff::exp(diff::clamp_max(diff::affine(similarity, -config.alpha, config.alpha * config.theta),
                                        kExponentCap));
    Var neg = diff::exp(diff::clamp_max(diff::affine(similarity, config.beta, -config.beta * config.theta),
                                        kExponentCap));
    return {diff::masked_sum(pos, masks.positive), diff::masked_sum(neg, masks.negative)};
}

OrthogonalTerm orthogonal_term(Var similarity, const PairMasks& masks) {
    auto& tape = similarity.tape();
    OrthogonalTerm term;

    Var mean_pos;
    if (masks.positives > 0) {
        mean_pos = diff::affine(diff::masked_sum(similarity, masks.positive),
                                1.0 / static_cast<double>(masks.positives), 0.0);
        term.mean_positive = mean_pos.value().item();
    } else {
        spdlog::warn("orthogonal term: batch has no positive pairs, using mean 1");
        mean_pos = tape.constant(Array::scalar(1.0));
    }

    Var mean_neg;
    if (masks.negatives > 0) {
        mean_neg = diff::affine(diff::masked_sum(similarity, masks.negative),
                                1.0 / static_cast<double>(masks.negatives), 0.0);
        term.mean_negative = mean_neg.value().item();
    } else {
        spdlog::warn("orthogonal term: batch has no negative pairs, using mean 0");
        mean_neg = tape.constant(Array::scalar(0.0));
    }

    term.value = diff::add(diff::affine(mean_pos, -1.0, 2.0), diff::affine(diff::abs(mean_neg), kNegativeWeight, 0.0));
    return term;
}

LossResult total_loss(Var embeddings, std::span<const std::size_t> identities, Var weight, Var bias,
                      const LossConfig& config) {
    config.validate();
    if (embeddings.shape().size() != 2 || embeddings.shape()[0] != identities.size()) {
        throw std::invalid_argument("total_loss: embeddings " + diff::to_string(embeddings.shape()) + " vs " +
                                    std::to_string(identities.size()) + " identity labels");
    }
    const PairMasks masks = pair_masks(identities);
    Var s = similarity_matrix(embeddings, weight, bias, config.activation);
    OrthogonalTerm ortho = orthogonal_term(s, masks);

    LossResult result;
    result.diagnostics.orthogonal = ortho.value.value().item();
    result.diagnostics.mean_positive = ortho.mean_positive;
    result.diagnostics.mean_negative = ortho.mean_negative;
    if (!config.pair_weighting) {
        result.loss = ortho.value;
        return result;
    }

    PairTerms terms = weighted_pair_losses(s, masks, config);
    result.diagnostics.l_plus = terms.l_plus.value().item();
    result.diagnostics.l_minus = terms.l_minus.value().item();
    Var log_plus = diff::affine(diff::log1p(terms.l_plus), 1.0 / config.alpha, 0.0);
    Var log_minus = diff::affine(diff::log1p(terms.l_minus), 1.0 / config.beta, 0.0);
    result.loss = diff::add(diff::add(log_plus, log_minus), ortho.value);
    return result;
}

}  // namespace fvm::loss
