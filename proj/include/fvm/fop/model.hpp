// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fvm/diff/array.hpp"
#include "fvm/diff/ops.hpp"
#include "fvm/diff/tape.hpp"

namespace fvm::fop {

enum class FusionKind { attention, conv, scalar };

/// Accepts "attention"/"att", "conv", "scalar"/"w".
FusionKind parse_fusion(std::string_view name);
std::string_view to_string(FusionKind kind);

enum class Stage { stage1, stage2 };

struct ModelConfig {
    std::size_t face_dim = 4096;
    std::size_t voice_dim = 512;
    std::size_t embed_dim = 128;
    std::size_t conv_channels = 8;
    std::size_t conv_kernel = 3;
    FusionKind update_fusion = FusionKind::conv;
    /// False runs the baseline branch alone (no second stage).
    bool dual = true;

    void validate() const;
};

/// Fully connected layer, weight stored [in x out].
struct Linear {
    diff::Parameter weight;
    diff::Parameter bias;

    diff::Var apply(diff::Tape& tape, diff::Var x);
};

struct AttentionHead {
    Linear scores;  // 2d -> 2
    Linear out;     // d -> d
};

struct ConvHead {
    diff::Parameter kernels;  // [C x 1 x k], no bias: batchnorm follows
    diff::Parameter gamma;    // [C]
    diff::Parameter beta;     // [C]
    diff::RunningStats stats;
    diff::Parameter gate_kernels;  // [1 x C x k]
    diff::Parameter gate_bias;     // [1]
    Linear compress;               // 2d -> d
};

struct ScalarHead {
    diff::Parameter logit;  // [1], mixing weight sigmoid(logit)
    Linear out;             // d -> d
};

struct Branch {
    std::string name;
    FusionKind kind = FusionKind::attention;
    bool frozen = false;
    Linear face;
    Linear voice;
    std::variant<AttentionHead, ConvHead, ScalarHead> head;

    bool initialized() const { return face.weight.value.size() > 1; }
    std::vector<diff::Parameter*> parameters();
};

enum class BranchId { frozen, update };

struct DualBranchModel {
    ModelConfig config;
    std::uint64_t seed = 0;
    /// 0 = untrained, 1 = baseline branch trained, 2 = both stages done.
    int completed_stage = 0;
    Branch frozen_branch;  // baseline, attention fusion
    Branch update_branch;  // fusion kind from config
    Linear combiner_hidden;
    Linear combiner_out;
    Linear similarity_head;  // W, b of the pair-similarity projection

    Branch& branch(BranchId id) { return id == BranchId::frozen ? frozen_branch : update_branch; }

    /// Parameters an optimizer should update in the given stage; frozen branches are excluded.
    std::vector<diff::Parameter*> trainable_parameters(Stage stage);
    /// Every stored array with a stable name, running statistics included.
    std::vector<std::pair<std::string, diff::Array*>> named_arrays();
};

/// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
DualBranchModel init_model(const ModelConfig& config, std::uint64_t seed);

struct Projection {
    diff::Var face;   // [B x d]
    diff::Var voice;  // [B x d]
};

/// Pure linear projections of raw [B x face_dim] / [B x voice_dim] batches.
Projection project_features(diff::Tape& tape, diff::Var faces, diff::Var voices, Branch& branch);

diff::Var attention_fuse(diff::Tape& tape, const Projection& p, Branch& branch);
diff::Var conv_gate_fuse(diff::Tape& tape, const Projection& p, Branch& branch, diff::NormMode mode);
diff::Var scalar_fuse(diff::Tape& tape, const Projection& p, Branch& branch);
diff::Var fuse(diff::Tape& tape, const Projection& p, Branch& branch, diff::NormMode mode);

/// a * w + b * (1 - w), elementwise.
diff::Var blend(diff::Var w, diff::Var a, diff::Var b);

struct Combined {
    diff::Var embedding;
    diff::Var weights;  // W in (0, 1)^d
};

Combined combine_dual(diff::Tape& tape, diff::Var i_con, diff::Var i_att, DualBranchModel& model);

struct ForwardOutput {
    diff::Var embedding;
    Projection baseline;
    Projection update;    // stage 2 only
    diff::Var weights;    // stage 2 only
};

/// Stage 1 returns the baseline branch's fused embedding; stage 2 combines both branches with
/// the baseline held constant in eval mode. Stage 2 on a model without stage 1 is rejected.
ForwardOutput forward_batch(diff::Tape& tape, const diff::Array& faces, const diff::Array& voices,
                            DualBranchModel& model, Stage stage, diff::NormMode mode);

/// Marks the branch frozen and stops its parameters from receiving gradients. Idempotent.
void freeze_branch(DualBranchModel& model, BranchId id);

struct ModalityEmbeddings {
    diff::Array faces;   // [B x d], unit rows
    diff::Array voices;  // [B x d], unit rows
};

/// Per-modality embeddings of trial pairs for distance scoring. Stage 1 uses the baseline
/// projections; stage 2 blends update and baseline projections with the combiner weights
/// of the pair. Runs in eval mode and leaves the model unchanged.
ModalityEmbeddings trial_embeddings(const diff::Array& faces, const diff::Array& voices, DualBranchModel& model,
                                    Stage stage);

}  // namespace fvm::fop
