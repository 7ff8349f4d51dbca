// SPDX-License-Identifier: Apache-2.0
#include "fvm/score/polarize.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace fvm::score {

void ConfidenceConfig::validate() const {
    if (!(w_a >= 0.0) || !(w_g >= 0.0)) throw std::invalid_argument("confidence weights must be nonnegative");
    if (std::abs(w_a + w_g - 1.0) > 1e-9) {
        throw std::invalid_argument("confidence weights must sum to 1, got w_a + w_g = " +
                                    std::to_string(w_a + w_g));
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("confidence threshold must lie in [0, 1]");
    if (!(alpha_pol >= 1.0) || !std::isfinite(alpha_pol)) {
        throw std::invalid_argument("alpha_pol must be a finite value >= 1");
    }
}

double age_confidence(double age_a, double age_f) {
    if (!(age_a >= 1.0 && age_a <= 100.0) || !(age_f >= 1.0 && age_f <= 100.0)) {
        throw std::invalid_argument("age_confidence: ages must lie in [1, 100]");
    }
    return 1.0 / (1.0 + std::abs(age_a - age_f));
}

double gender_confidence(double p_a, double p_f) {
    if (!(p_a >= 0.0 && p_a <= 1.0) || !(p_f >= 0.0 && p_f <= 1.0)) {
        throw std::invalid_argument("gender_confidence: probabilities must lie in [0, 1]");
    }
    return p_a * p_f + (1.0 - p_a) * (1.0 - p_f);
}

double combined_confidence(double c_a, double c_g, const ConfidenceConfig& config) {
    return config.w_a * c_a + config.w_g * c_g;
}

double polarize(double score, double confidence, const ConfidenceConfig& config) {
    if (!(score >= 0.0)) throw std::invalid_argument("polarize: score must be nonnegative");
    return confidence > config.threshold ? score / config.alpha_pol : score * config.alpha_pol;
}

PolarizeResult polarize_scores(const std::vector<TrialScore>& scores,
                               const std::vector<data::AttributePrediction>& attributes,
                               const ConfidenceConfig& config) {
    config.validate();
    std::map<std::string, const data::AttributePrediction*> by_id;
    for (const auto& a : attributes) by_id[a.sample_id] = &a;

    PolarizeResult out;
    out.scores = scores;
    std::size_t flagged = 0;
    for (auto& s : out.scores) {
        AuditEntry e{s.trial_id, s.score, s.score, false, 0.0, 0.0, 0.0, "none"};
        const auto face = by_id.find(s.face_id);
        const auto voice = by_id.find(s.voice_id);
        if (face == by_id.end() || voice == by_id.end()) {
            e.flagged = true;
            ++flagged;
            s.adjusted_score.reset();
            s.confidence.reset();
        } else {
            e.c_a = age_confidence(voice->second->age, face->second->age);
            e.c_g = gender_confidence(voice->second->gender_prob, face->second->gender_prob);
            e.c = combined_confidence(e.c_a, e.c_g, config);
            e.adjusted = polarize(s.score, e.c, config);
            e.direction = e.c > config.threshold ? "down" : "up";
            s.adjusted_score = e.adjusted;
            s.confidence = e.c;
        }
        out.audit.push_back(std::move(e));
    }
    if (flagged > 0) spdlog::warn("{} of {} trials lack attribute predictions and keep their raw score", flagged,
                                  out.scores.size());
    return out;
}

void write_audit(const std::filesystem::path& path, const std::vector<AuditEntry>& audit) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& e : audit) {
        nlohmann::json j = {{"trial_id", e.trial_id}, {"raw", e.raw},         {"adjusted", e.adjusted},
                            {"flagged", e.flagged},   {"direction", e.direction}};
        if (e.flagged) {
            j["c_a"] = j["c_g"] = j["c"] = nullptr;
        } else {
            j["c_a"] = e.c_a;
            j["c_g"] = e.c_g;
            j["c"] = e.c;
        }
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_polarize_outputs(const PolarizeResult& result, const PolarizeFiles& out) {
    std::vector<TrialScore> adjusted = result.scores;
    for (auto& s : adjusted) s.score = s.adjusted_score.value_or(s.score);
    write_scores(out.adjusted, adjusted);
    write_polarized(out.polarized, result.scores);
    write_audit(out.audit, result.audit);
}

PolarizeResult polarize_file(const std::filesystem::path& scores, const std::filesystem::path& attributes,
                             const ConfidenceConfig& config, const PolarizeFiles& out) {
    auto result = polarize_scores(load_scores(scores), data::load_attributes(attributes), config);
    write_polarize_outputs(result, out);
    return result;
}

}  // namespace fvm::score
