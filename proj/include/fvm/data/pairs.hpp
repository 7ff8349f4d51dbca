// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fvm/data/records.hpp"

namespace fvm::data {

enum class Origin { original, augmented };

/// Face and voice are indices into the record list the pair was built from.
struct SamplePair {
    std::size_t face = 0;
    std::size_t voice = 0;
    Origin origin = Origin::original;

    bool operator==(const SamplePair&) const = default;
};

/// One pair per (identity, scene, slot): the k-th face of a scene goes with its k-th voice.
/// Scenes holding only one modality, or unequal counts, are reported as warnings.
std::vector<SamplePair> index_pairs(const std::vector<FeatureRecord>& records,
                                    std::vector<std::string>* warnings = nullptr);

/// Every (face of i, voice of j) with i != j and the same identity.
std::vector<SamplePair> augmentation_candidates(const std::vector<SamplePair>& originals,
                                                const std::vector<FeatureRecord>& records);

/// Originals followed by candidates drawn without replacement until the list reaches
/// multiplier x |originals| or the candidates run out.
std::vector<SamplePair> augment_pairs(const std::vector<SamplePair>& originals,
                                      const std::vector<FeatureRecord>& records, std::size_t multiplier,
                                      std::uint64_t seed);

/// Identity-disjoint partition; rejects unknown test identities and an empty training side.
std::pair<std::vector<FeatureRecord>, std::vector<FeatureRecord>> split_unseen(
    const std::vector<FeatureRecord>& records, const std::vector<std::string>& test_identities);

/// Shuffled index batches keyed by (seed, epoch). A trailing batch of one joins the previous one.
std::vector<std::vector<std::size_t>> make_batches(std::size_t pair_count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch);

/// Records whose language tag is `language`.
std::vector<FeatureRecord> filter_language(const std::vector<FeatureRecord>& records, const std::string& language);

struct Trial {
    std::string trial_id;
    std::string face_id;
    std::string voice_id;
    std::optional<bool> same;  // empty when the label is unknown
};

/// Each original pair yields a target trial and a nontarget trial against a seeded-random voice
/// of another identity, taken from the same language when one exists.
std::vector<Trial> make_trials(const std::vector<FeatureRecord>& records, std::uint64_t seed);

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials);
std::vector<Trial> load_trials(const std::filesystem::path& path);

void write_pairs(const std::filesystem::path& path, const std::vector<SamplePair>& pairs,
                 const std::vector<FeatureRecord>& records);

}  // namespace fvm::data
