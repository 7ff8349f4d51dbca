// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fvm::data {

enum class Modality { face, voice };

Modality parse_modality(std::string_view name);
std::string_view to_string(Modality modality);

struct FeatureRecord {
    std::string sample_id;
    std::string identity;
    std::string scene;
    std::string language;
    Modality modality = Modality::face;
    std::vector<double> vector;

    bool operator==(const FeatureRecord&) const = default;
};

struct DatasetSummary {
    std::size_t identities = 0;
    std::size_t scenes = 0;  // distinct (identity, scene) combinations
    std::size_t face_records = 0;
    std::size_t voice_records = 0;
    std::size_t original_pairs = 0;
};

struct FeatureSet {
    std::vector<FeatureRecord> records;
    std::size_t face_dim = 0;
    std::size_t voice_dim = 0;
};

/// Checks per-modality dimensions and sample_id uniqueness. Dimensions left unset are taken
/// from the first record of each modality.
void validate_features(FeatureSet& set);

/// Reads a JSON-lines features file. Errors name the line number.
FeatureSet load_features(const std::filesystem::path& path, std::optional<std::size_t> face_dim = std::nullopt,
                         std::optional<std::size_t> voice_dim = std::nullopt);
void write_features(const std::filesystem::path& path, const std::vector<FeatureRecord>& records);

DatasetSummary summarize(const std::vector<FeatureRecord>& records);

/// Sorted distinct identity labels.
std::vector<std::string> identities(const std::vector<FeatureRecord>& records);

}  // namespace fvm::data
