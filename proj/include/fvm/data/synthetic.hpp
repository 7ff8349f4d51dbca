// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fvm/data/records.hpp"

namespace fvm::data {

struct AttributePrediction {
    std::string sample_id;
    Modality modality = Modality::face;
    double age = 0.0;          // [1, 100]
    double gender_prob = 0.0;  // probability of the reference gender class

    bool operator==(const AttributePrediction&) const = default;
};

struct TruthRow {
    std::string sample_id;
    std::string identity;
    int age = 0;
    int gender = 0;
};

struct SyntheticSpec {
    std::size_t n_train_identities = 64;
    std::size_t n_test_identities = 6;
    std::size_t scenes_per_identity = 4;
    std::size_t samples_per_scene = 4;
    std::size_t face_dim = 4096;
    std::size_t voice_dim = 512;
    std::size_t latent_dim = 16;
    double scene_noise = 0.3;
    double sample_noise = 0.3;
    std::size_t n_languages = 2;
    double language_offset = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticData {
    std::vector<FeatureRecord> records;
    std::vector<AttributePrediction> attributes;
    std::vector<TruthRow> truth;
    std::vector<std::string> train_identities;
    std::vector<std::string> test_identities;
};

/// Language tag of the k-th language: "en", "ur", then "l2", "l3", ...
std::string language_tag(std::size_t k);

/// Correlated face/voice embeddings around a per-identity latent. Both modalities are divided
/// by sqrt(dim) so that every vector has roughly unit scale.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

struct SyntheticFiles {
    std::filesystem::path features;
    std::filesystem::path attributes;
    std::filesystem::path truth;
    std::filesystem::path split;
};

/// Writes features.jsonl, attributes.jsonl, truth.csv and split.json into `dir`. Without
/// `with_features` the features file is skipped and its path left empty.
SyntheticFiles write_synthetic(const SyntheticData& data, const SyntheticSpec& spec,
                               const std::filesystem::path& dir, bool with_features = true);

/// Test identities recorded in a split.json.
std::vector<std::string> load_test_identities(const std::filesystem::path& split);

void write_attributes(const std::filesystem::path& path, const std::vector<AttributePrediction>& rows);
std::vector<AttributePrediction> load_attributes(const std::filesystem::path& path);

}  // namespace fvm::data
