// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fvm/data/pairs.hpp"

namespace fvm::score {

/// Distance score of one trial; higher means more likely different people.
struct TrialScore {
    std::string trial_id;
    std::string face_id;
    std::string voice_id;
    std::optional<bool> same;  // nullopt = unknown label
    double score = 0.0;
    std::optional<double> adjusted_score;
    std::optional<double> confidence;
};

struct TrialEmbedding {
    data::Trial trial;
    std::vector<double> face;   // empty = missing
    std::vector<double> voice;  // empty = missing
};

struct ScoredTrials {
    std::vector<TrialScore> scores;   // sorted by trial_id
    std::vector<std::string> errors;  // one line per rejected trial
};

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

/// Scores every trial with both embeddings present and of equal length; others go to `errors`.
ScoredTrials trial_scores(const std::vector<TrialEmbedding>& trials);

struct DetPoint {
    double threshold;
    double far;
    double frr;
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
    double far = 0.0;  // interpolated rates at the crossing
    double frr = 0.0;
    std::vector<DetPoint> det;
};

/// FRR(t) = share of targets scoring > t, FAR(t) = share of nontargets scoring <= t.
/// Points at -inf, every unique score, and +inf, sorted by threshold.
std::vector<DetPoint> det_curve(const std::vector<double>& targets, const std::vector<double>& nontargets);

/// Linear interpolation across the first sign change of FAR - FRR along the DET sweep.
/// Throws std::invalid_argument when either class is empty or a score is not finite.
EerResult compute_eer(const std::vector<double>& targets, const std::vector<double>& nontargets);

enum class ScoreField { raw, adjusted };

/// Splits labelled trials into target and nontarget score lists; unlabelled trials are ignored.
/// The adjusted field falls back to the raw score where no adjustment exists.
EerResult compute_eer(const std::vector<TrialScore>& scores, ScoreField field = ScoreField::raw);

/// CSV: trial_id,face_sample_id,voice_sample_id,label,score with label same|different|unknown.
void write_scores(const std::filesystem::path& path, const std::vector<TrialScore>& scores);
std::vector<TrialScore> load_scores(const std::filesystem::path& path);

/// CSV: trial_id,score,adjusted_score,confidence. Empty cells where no adjustment happened.
void write_polarized(const std::filesystem::path& path, const std::vector<TrialScore>& scores);

/// CSV: threshold,far,frr.
void write_det(const std::filesystem::path& path, const std::vector<DetPoint>& det);

}  // namespace fvm::score
