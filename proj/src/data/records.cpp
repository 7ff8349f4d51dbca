// SPDX-License-Identifier: Apache-2.0
#include "fvm/data/records.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "fvm/data/pairs.hpp"

namespace fvm::data {

using nlohmann::json;

Modality parse_modality(std::string_view name) {
    if (name == "face") return Modality::face;
    if (name == "voice") return Modality::voice;
    throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

std::string_view to_string(Modality modality) {
    return modality == Modality::face ? "face" : "voice";
}

namespace {

void check_record(const FeatureRecord& r, FeatureSet& set, std::unordered_set<std::string>& seen,
                  const std::string& where) {
    std::size_t& dim = r.modality == Modality::face ? set.face_dim : set.voice_dim;
    if (dim == 0) dim = r.vector.size();
    if (r.vector.size() != dim || dim == 0) {
        throw std::invalid_argument(where + "record '" + r.sample_id + "' has a " + std::to_string(r.vector.size()) +
                                    "-length " + std::string(to_string(r.modality)) + " vector, dataset dimension is " +
                                    std::to_string(dim));
    }
    if (!seen.insert(r.sample_id).second) {
        throw std::invalid_argument(where + "duplicate sample_id '" + r.sample_id + "'");
    }
}

}  // namespace

void validate_features(FeatureSet& set) {
    std::unordered_set<std::string> seen;
    for (const auto& r : set.records) check_record(r, set, seen, "");
}

FeatureSet load_features(const std::filesystem::path& path, std::optional<std::size_t> face_dim,
                         std::optional<std::size_t> voice_dim) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read features file " + path.string());
    FeatureSet set;
    set.face_dim = face_dim.value_or(0);
    set.voice_dim = voice_dim.value_or(0);
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        FeatureRecord r;
        try {
            const json j = json::parse(line);
            r.sample_id = j.at("sample_id").get<std::string>();
            r.identity = j.at("identity").get<std::string>();
            r.scene = j.at("scene").get<std::string>();
            r.language = j.at("language").get<std::string>();
            r.modality = parse_modality(j.at("modality").get<std::string>());
            r.vector = j.at("vector").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw std::invalid_argument(where + e.what());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + e.what());
        }
        check_record(r, set, seen, where);
        set.records.push_back(std::move(r));
    }
    return set;
}

void write_features(const std::filesystem::path& path, const std::vector<FeatureRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) {
        const json j = {{"sample_id", r.sample_id}, {"identity", r.identity},
                        {"scene", r.scene},         {"language", r.language},
                        {"modality", to_string(r.modality)}, {"vector", r.vector}};
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

DatasetSummary summarize(const std::vector<FeatureRecord>& records) {
    DatasetSummary s;
    std::set<std::pair<std::string, std::string>> scenes;
    for (const auto& r : records) {
        scenes.emplace(r.identity, r.scene);
        (r.modality == Modality::face ? s.face_records : s.voice_records) += 1;
    }
    s.identities = identities(records).size();
    s.scenes = scenes.size();
    s.original_pairs = index_pairs(records).size();
    return s;
}

std::vector<std::string> identities(const std::vector<FeatureRecord>& records) {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.identity);
    return {ids.begin(), ids.end()};
}

}  // namespace fvm::data
