// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fvm/data/synthetic.hpp"
#include "fvm/score/scoring.hpp"

namespace fvm::score {

struct ConfidenceConfig {
    double w_a = 0.5;
    double w_g = 0.5;
    double threshold = 0.6;
    double alpha_pol = 1.2;

    /// Weights nonnegative summing to 1 (within 1e-9), threshold in [0, 1], alpha_pol >= 1.
    void validate() const;
};

/// 1 / (1 + |a - f|); ages must lie in [1, 100].
double age_confidence(double age_a, double age_f);
/// p_a p_f + (1 - p_a)(1 - p_f); probabilities must lie in [0, 1].
double gender_confidence(double p_a, double p_f);
double combined_confidence(double c_a, double c_g, const ConfidenceConfig& config);
/// score / alpha_pol when confidence > threshold, score * alpha_pol otherwise.
double polarize(double score, double confidence, const ConfidenceConfig& config);

struct AuditEntry {
    std::string trial_id;
    double raw = 0.0;
    double adjusted = 0.0;
    bool flagged = false;  // attributes missing, score passed through
    double c_a = 0.0;
    double c_g = 0.0;
    double c = 0.0;
    std::string direction;  // "down", "up" or "none"
};

struct PolarizeResult {
    std::vector<TrialScore> scores;  // adjusted_score and confidence filled in
    std::vector<AuditEntry> audit;
};

PolarizeResult polarize_scores(const std::vector<TrialScore>& scores,
                               const std::vector<data::AttributePrediction>& attributes,
                               const ConfidenceConfig& config);

struct PolarizeFiles {
    std::filesystem::path adjusted;   // score-file schema with the score column adjusted
    std::filesystem::path polarized;  // trial_id,score,adjusted_score,confidence
    std::filesystem::path audit;      // JSON lines
};

/// Writes the adjusted score file, the polarized CSV and the audit log.
void write_polarize_outputs(const PolarizeResult& result, const PolarizeFiles& out);

/// Reads a score file and an attributes file and writes the three outputs.
PolarizeResult polarize_file(const std::filesystem::path& scores, const std::filesystem::path& attributes,
                             const ConfidenceConfig& config, const PolarizeFiles& out);

void write_audit(const std::filesystem::path& path, const std::vector<AuditEntry>& audit);

}  // namespace fvm::score
