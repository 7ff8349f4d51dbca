// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fvm/data/synthetic.hpp"
#include "fvm/fop/model.hpp"
#include "fvm/loss/pair_loss.hpp"
#include "fvm/score/polarize.hpp"

namespace fvm::run {

struct DataConfig {
    /// Empty features path means a synthetic set is generated from `RunConfig::synthetic`.
    std::string features;
    std::string split;       // JSON with test_identities; required with `features`
    std::string trials;      // optional; built from the test split when empty
    std::string attributes;  // optional; polarization is skipped without it
    std::string train_language;               // empty = all
    std::vector<std::string> test_languages;  // one evaluation per entry; empty = all test data
};

struct TrainConfig {
    std::size_t stage1_epochs = 30;
    std::size_t stage2_epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t augment_multiplier = 1;
    std::uint64_t seed = 0;
};

struct PolarizeConfig {
    bool enabled = true;
    score::ConfidenceConfig confidence;
};

struct RunConfig {
    DataConfig data;
    data::SyntheticSpec synthetic;
    fop::ModelConfig model;  // face_dim / voice_dim are taken from the data
    loss::LossConfig loss;
    TrainConfig train;
    PolarizeConfig polarize;
    std::string output_dir = "runs/default";

    /// Range checks of every section; with `check_paths`, referenced input files must exist.
    void validate(bool check_paths = true) const;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types throw std::invalid_argument.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Hex BLAKE2b-256 of the canonical JSON form.
std::string config_hash(const RunConfig& config);

}  // namespace fvm::run
