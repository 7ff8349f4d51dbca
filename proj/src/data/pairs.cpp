// SPDX-License-Identifier: Apache-2.0
#include "fvm/data/pairs.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "fvm/data/csv.hpp"

namespace fvm::data {

std::vector<SamplePair> index_pairs(const std::vector<FeatureRecord>& records, std::vector<std::string>* warnings) {
    struct Slots {
        std::vector<std::size_t> faces;
        std::vector<std::size_t> voices;
    };
    std::map<std::pair<std::string, std::string>, Slots> scenes;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& slots = scenes[{records[i].identity, records[i].scene}];
        (records[i].modality == Modality::face ? slots.faces : slots.voices).push_back(i);
    }
    std::vector<SamplePair> pairs;
    for (const auto& [key, slots] : scenes) {
        if (slots.faces.size() != slots.voices.size()) {
            std::string msg = "identity '" + key.first + "' scene '" + key.second + "' has " +
                              std::to_string(slots.faces.size()) + " face and " + std::to_string(slots.voices.size()) +
                              " voice samples; unmatched samples are skipped";
            spdlog::warn("{}", msg);
            if (warnings) warnings->push_back(std::move(msg));
        }
        const std::size_t n = std::min(slots.faces.size(), slots.voices.size());
        for (std::size_t k = 0; k < n; ++k) pairs.push_back({slots.faces[k], slots.voices[k], Origin::original});
    }
    return pairs;
}

std::vector<SamplePair> augmentation_candidates(const std::vector<SamplePair>& originals,
                                                const std::vector<FeatureRecord>& records) {
    std::map<std::string, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < originals.size(); ++i) by_identity[records.at(originals[i].face).identity].push_back(i);
    std::vector<SamplePair> out;
    for (const auto& [identity, members] : by_identity) {
        for (std::size_t i : members) {
            for (std::size_t j : members) {
                if (i != j) out.push_back({originals[i].face, originals[j].voice, Origin::augmented});
            }
        }
    }
    return out;
}

std::vector<SamplePair> augment_pairs(const std::vector<SamplePair>& originals,
                                      const std::vector<FeatureRecord>& records, std::size_t multiplier,
                                      std::uint64_t seed) {
    if (multiplier == 0) throw std::invalid_argument("augment_pairs: multiplier must be at least 1");
    std::vector<SamplePair> out = originals;
    const std::size_t wanted = (multiplier - 1) * originals.size();
    if (wanted == 0) return out;
    auto candidates = augmentation_candidates(originals, records);
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(std::min(wanted, candidates.size()));
    out.insert(out.end(), candidates.begin(), candidates.end());
    return out;
}

std::pair<std::vector<FeatureRecord>, std::vector<FeatureRecord>> split_unseen(
    const std::vector<FeatureRecord>& records, const std::vector<std::string>& test_identities) {
    const auto present = identities(records);
    const std::set<std::string> held(test_identities.begin(), test_identities.end());
    for (const auto& id : held) {
        if (!std::binary_search(present.begin(), present.end(), id)) {
            throw std::invalid_argument("split_unseen: test identity '" + id + "' is not in the dataset");
        }
    }
    if (held.size() == present.size()) {
        throw std::invalid_argument("split_unseen: holding out all " + std::to_string(present.size()) +
                                    " identities leaves no training data");
    }
    std::pair<std::vector<FeatureRecord>, std::vector<FeatureRecord>> out;
    for (const auto& r : records) (held.count(r.identity) ? out.second : out.first).push_back(r);
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t pair_count, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) throw std::invalid_argument("make_batches: batch size must be at least 2");
    if (pair_count < 2) throw std::invalid_argument("make_batches: need at least 2 pairs");
    std::vector<std::size_t> order(pair_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(key);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < pair_count; start += batch_size) {
        const std::size_t end = std::min(pair_count, start + batch_size);
        if (end - start == 1 && !batches.empty()) {
            batches.back().push_back(order[start]);
        } else {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

std::vector<FeatureRecord> filter_language(const std::vector<FeatureRecord>& records, const std::string& language) {
    std::vector<FeatureRecord> out;
    for (const auto& r : records) {
        if (r.language == language) out.push_back(r);
    }
    return out;
}

std::vector<Trial> make_trials(const std::vector<FeatureRecord>& records, std::uint64_t seed) {
    const auto pairs = index_pairs(records);
    std::map<std::string, std::vector<std::size_t>> voices_by_language;
    std::vector<std::size_t> all_voices;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].modality != Modality::voice) continue;
        voices_by_language[records[i].language].push_back(i);
        all_voices.push_back(i);
    }
    auto has_other = [&](const std::vector<std::size_t>& pool, const std::string& identity) {
        return std::any_of(pool.begin(), pool.end(), [&](std::size_t v) { return records[v].identity != identity; });
    };

    std::mt19937_64 rng(seed);
    std::vector<Trial> trials;
    trials.reserve(2 * pairs.size());
    char id[32];
    for (const auto& p : pairs) {
        const auto& face = records[p.face];
        const auto& same_language = voices_by_language[face.language];
        const auto& pool = has_other(same_language, face.identity) ? same_language : all_voices;
        if (!has_other(pool, face.identity)) {
            throw std::invalid_argument("make_trials: no voice of another identity exists for nontarget trials");
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::size_t other = pool[pick(rng)];
        while (records[other].identity == face.identity) other = pool[pick(rng)];

        std::snprintf(id, sizeof(id), "t%06zu", trials.size());
        trials.push_back({id, face.sample_id, records[p.voice].sample_id, true});
        std::snprintf(id, sizeof(id), "t%06zu", trials.size());
        trials.push_back({id, face.sample_id, records[other].sample_id, false});
    }
    return trials;
}

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "trial_id,face_sample_id,voice_sample_id,label\n";
    for (const auto& t : trials) {
        out << t.trial_id << ',' << t.face_id << ',' << t.voice_id << ',';
        if (t.same) out << (*t.same ? '1' : '0');
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto c_id = table.column("trial_id");
    const auto c_face = table.column("face_sample_id");
    const auto c_voice = table.column("voice_sample_id");
    const auto c_label = table.column("label");
    std::vector<Trial> trials;
    for (const auto& row : table.rows) {
        Trial t{row[c_id], row[c_face], row[c_voice], std::nullopt};
        if (row[c_label] == "1") {
            t.same = true;
        } else if (row[c_label] == "0") {
            t.same = false;
        } else if (!row[c_label].empty()) {
            throw std::invalid_argument("trial '" + t.trial_id + "': label must be 1, 0 or empty");
        }
        trials.push_back(std::move(t));
    }
    return trials;
}

void write_pairs(const std::filesystem::path& path, const std::vector<SamplePair>& pairs,
                 const std::vector<FeatureRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "face_sample_id,voice_sample_id,origin\n";
    for (const auto& p : pairs) {
        out << records.at(p.face).sample_id << ',' << records.at(p.voice).sample_id << ','
            << (p.origin == Origin::original ? "original" : "augmented") << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fvm::data
