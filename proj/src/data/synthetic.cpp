// SPDX-License-Identifier: Apache-2.0
#include "fvm/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

namespace fvm::data {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (n_train_identities == 0 || n_test_identities == 0) {
        throw std::invalid_argument("synthetic: identity counts must be positive");
    }
    if (scenes_per_identity == 0 || samples_per_scene == 0) {
        throw std::invalid_argument("synthetic: scenes_per_identity and samples_per_scene must be positive");
    }
    if (face_dim == 0 || voice_dim == 0 || latent_dim == 0) {
        throw std::invalid_argument("synthetic: dimensions must be positive");
    }
    if (n_languages == 0) throw std::invalid_argument("synthetic: need at least one language");
    if (!(scene_noise >= 0.0) || !(sample_noise >= 0.0) || !(language_offset >= 0.0)) {
        throw std::invalid_argument("synthetic: noise and offset magnitudes must be nonnegative");
    }
}

std::string language_tag(std::size_t k) {
    if (k == 0) return "en";
    if (k == 1) return "ur";
    return "l" + std::to_string(k);
}

namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sd) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = sd * dist(rng);
    return v;
}

// rows x cols matrix with N(0, 1/cols) entries, row-major
std::vector<double> mixing_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    return gaussian(rng, rows * cols, 1.0 / std::sqrt(static_cast<double>(cols)));
}

std::vector<double> mix(const std::vector<double>& a, std::size_t rows, const std::vector<double>& z) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) acc += a[r * z.size() + c] * z[c];
        out[r] = acc;
    }
    return out;
}

std::string identity_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "id%04zu", i);
    return buf;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const auto a_face = mixing_matrix(rng, spec.face_dim, spec.latent_dim);
    const auto a_voice = mixing_matrix(rng, spec.voice_dim, spec.latent_dim);
    std::vector<std::vector<double>> language_offsets;
    for (std::size_t k = 0; k < spec.n_languages; ++k) {
        language_offsets.push_back(gaussian(rng, spec.voice_dim, spec.language_offset));
    }
    const double face_scale = 1.0 / std::sqrt(static_cast<double>(spec.face_dim));
    const double voice_scale = 1.0 / std::sqrt(static_cast<double>(spec.voice_dim));

    std::uniform_int_distribution<int> age_dist(18, 80);
    std::bernoulli_distribution gender_dist(0.5);
    std::normal_distribution<double> unit(0.0, 1.0);

    SyntheticData data;
    const std::size_t total = spec.n_train_identities + spec.n_test_identities;
    for (std::size_t i = 0; i < total; ++i) {
        const std::string identity = identity_name(i);
        (i < spec.n_train_identities ? data.train_identities : data.test_identities).push_back(identity);
        const auto z = gaussian(rng, spec.latent_dim, 1.0);
        const int age = age_dist(rng);
        const int gender = gender_dist(rng) ? 1 : 0;
        const auto face_mean = mix(a_face, spec.face_dim, z);
        const auto voice_mean = mix(a_voice, spec.voice_dim, z);

        for (std::size_t s = 0; s < spec.scenes_per_identity; ++s) {
            const std::string scene = "s" + std::to_string(s);
            const std::size_t lang = s % spec.n_languages;
            const auto scene_offset = gaussian(rng, spec.face_dim, spec.scene_noise);
            for (std::size_t k = 0; k < spec.samples_per_scene; ++k) {
                const std::string stem = identity + "_" + scene + "_k" + std::to_string(k);
                FeatureRecord face{stem + "_f", identity, scene, language_tag(lang), Modality::face, {}};
                FeatureRecord voice{stem + "_v", identity, scene, language_tag(lang), Modality::voice, {}};
                auto noise = gaussian(rng, spec.face_dim, spec.sample_noise);
                face.vector.resize(spec.face_dim);
                for (std::size_t d = 0; d < spec.face_dim; ++d) {
                    face.vector[d] = (face_mean[d] + scene_offset[d] + noise[d]) * face_scale;
                }
                noise = gaussian(rng, spec.voice_dim, spec.sample_noise);
                voice.vector.resize(spec.voice_dim);
                for (std::size_t d = 0; d < spec.voice_dim; ++d) {
                    voice.vector[d] = (voice_mean[d] + language_offsets[lang][d] + noise[d]) * voice_scale;
                }
                for (const auto* r : {&face, &voice}) {
                    const double age_pred = std::clamp(age + 4.0 * unit(rng), 1.0, 100.0);
                    const double gender_prob = std::clamp(gender + 0.1 * unit(rng), 0.01, 0.99);
                    data.attributes.push_back({r->sample_id, r->modality, age_pred, gender_prob});
                    data.truth.push_back({r->sample_id, identity, age, gender});
                }
                data.records.push_back(std::move(face));
                data.records.push_back(std::move(voice));
            }
        }
    }
    return data;
}

namespace {

json spec_json(const SyntheticSpec& s) {
    return {{"n_train_identities", s.n_train_identities},
            {"n_test_identities", s.n_test_identities},
            {"scenes_per_identity", s.scenes_per_identity},
            {"samples_per_scene", s.samples_per_scene},
            {"face_dim", s.face_dim},
            {"voice_dim", s.voice_dim},
            {"latent_dim", s.latent_dim},
            {"scene_noise", s.scene_noise},
            {"sample_noise", s.sample_noise},
            {"n_languages", s.n_languages},
            {"language_offset", s.language_offset},
            {"seed", s.seed}};
}

}  // namespace

SyntheticFiles write_synthetic(const SyntheticData& data, const SyntheticSpec& spec,
                               const std::filesystem::path& dir, bool with_features) {
    std::filesystem::create_directories(dir);
    SyntheticFiles files{dir / "features.jsonl", dir / "attributes.jsonl", dir / "truth.csv", dir / "split.json"};
    if (with_features) {
        write_features(files.features, data.records);
    } else {
        files.features.clear();
    }
    write_attributes(files.attributes, data.attributes);

    std::ofstream truth(files.truth, std::ios::trunc);
    truth << "sample_id,identity,age,gender\n";
    for (const auto& t : data.truth) truth << t.sample_id << ',' << t.identity << ',' << t.age << ',' << t.gender << '\n';
    if (!truth) throw std::runtime_error("failed writing " + files.truth.string());

    std::ofstream split(files.split, std::ios::trunc);
    split << json{{"train_identities", data.train_identities},
                  {"test_identities", data.test_identities},
                  {"spec", spec_json(spec)}}
                 .dump(2)
          << '\n';
    if (!split) throw std::runtime_error("failed writing " + files.split.string());
    return files;
}

std::vector<std::string> load_test_identities(const std::filesystem::path& split) {
    std::ifstream in(split);
    if (!in) throw std::invalid_argument("cannot read split file " + split.string());
    try {
        return json::parse(in).at("test_identities").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(split.string() + ": " + e.what());
    }
}

void write_attributes(const std::filesystem::path& path, const std::vector<AttributePrediction>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& a : rows) {
        out << json{{"sample_id", a.sample_id},
                    {"modality", to_string(a.modality)},
                    {"age", a.age},
                    {"gender_prob", a.gender_prob}}
                   .dump()
            << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<AttributePrediction> load_attributes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read attributes file " + path.string());
    std::vector<AttributePrediction> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            rows.push_back({j.at("sample_id").get<std::string>(), parse_modality(j.at("modality").get<std::string>()),
                            j.at("age").get<double>(), j.at("gender_prob").get<double>()});
        } catch (const json::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace fvm::data
