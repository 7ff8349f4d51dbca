// SPDX-License-Identifier: Apache-2.0
#include "fvm/score/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fvm/data/csv.hpp"

namespace fvm::score {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("euclidean: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

ScoredTrials trial_scores(const std::vector<TrialEmbedding>& trials) {
    ScoredTrials out;
    for (const auto& t : trials) {
        const auto& id = t.trial.trial_id;
        if (t.face.empty() || t.voice.empty()) {
            out.errors.push_back("trial '" + id + "': missing " + (t.face.empty() ? "face" : "voice") +
                                 " embedding");
            continue;
        }
        if (t.face.size() != t.voice.size()) {
            out.errors.push_back("trial '" + id + "': face embedding has " + std::to_string(t.face.size()) +
                                 " dims, voice has " + std::to_string(t.voice.size()));
            continue;
        }
        out.scores.push_back({id, t.trial.face_id, t.trial.voice_id, t.trial.same, euclidean(t.face, t.voice),
                              std::nullopt, std::nullopt});
    }
    std::stable_sort(out.scores.begin(), out.scores.end(),
                     [](const TrialScore& a, const TrialScore& b) { return a.trial_id < b.trial_id; });
    return out;
}

namespace {

void check_classes(const std::vector<double>& targets, const std::vector<double>& nontargets) {
    if (targets.empty() || nontargets.empty()) {
        throw std::invalid_argument("EER needs at least one target and one nontarget trial (got " +
                                    std::to_string(targets.size()) + " and " + std::to_string(nontargets.size()) +
                                    ")");
    }
    for (const auto* v : {&targets, &nontargets}) {
        for (double x : *v) {
            if (!std::isfinite(x)) throw std::invalid_argument("EER: scores must be finite");
        }
    }
}

}  // namespace

std::vector<DetPoint> det_curve(const std::vector<double>& targets, const std::vector<double>& nontargets) {
    check_classes(targets, nontargets);
    std::vector<double> t = targets;
    std::vector<double> n = nontargets;
    std::sort(t.begin(), t.end());
    std::sort(n.begin(), n.end());
    std::vector<double> all = t;
    all.insert(all.end(), n.begin(), n.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    const double nt = static_cast<double>(t.size());
    const double nn = static_cast<double>(n.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<DetPoint> det;
    det.reserve(all.size() + 2);
    det.push_back({-inf, 0.0, 1.0});
    for (double u : all) {
        const auto t_le = static_cast<double>(std::upper_bound(t.begin(), t.end(), u) - t.begin());
        const auto n_le = static_cast<double>(std::upper_bound(n.begin(), n.end(), u) - n.begin());
        det.push_back({u, n_le / nn, (nt - t_le) / nt});
    }
    det.push_back({inf, 1.0, 0.0});
    return det;
}

EerResult compute_eer(const std::vector<double>& targets, const std::vector<double>& nontargets) {
    EerResult r;
    r.det = det_curve(targets, nontargets);
    for (std::size_t i = 1; i < r.det.size(); ++i) {
        const auto& hi = r.det[i];
        const double d1 = hi.far - hi.frr;
        if (d1 < 0.0) continue;
        if (d1 == 0.0) {
            r.eer = r.far = r.frr = hi.far;
            r.threshold = hi.threshold;
            return r;
        }
        const auto& lo = r.det[i - 1];
        const double d0 = lo.far - lo.frr;
        const double w = d0 / (d0 - d1);
        r.far = lo.far + w * (hi.far - lo.far);
        r.frr = lo.frr + w * (hi.frr - lo.frr);
        r.eer = r.far;
        if (std::isinf(lo.threshold)) {
            r.threshold = hi.threshold;
        } else if (std::isinf(hi.threshold)) {
            r.threshold = lo.threshold;
        } else {
            r.threshold = lo.threshold + w * (hi.threshold - lo.threshold);
        }
        return r;
    }
    throw std::logic_error("compute_eer: DET sweep never crossed");
}

EerResult compute_eer(const std::vector<TrialScore>& scores, ScoreField field) {
    std::vector<double> targets;
    std::vector<double> nontargets;
    for (const auto& s : scores) {
        if (!s.same) continue;
        const double v = field == ScoreField::adjusted ? s.adjusted_score.value_or(s.score) : s.score;
        (*s.same ? targets : nontargets).push_back(v);
    }
    return compute_eer(targets, nontargets);
}

namespace {

const char* label_text(const std::optional<bool>& same) {
    if (!same) return "unknown";
    return *same ? "same" : "different";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

void write_scores(const std::filesystem::path& path, const std::vector<TrialScore>& scores) {
    auto out = open_out(path);
    out << "trial_id,face_sample_id,voice_sample_id,label,score\n";
    for (const auto& s : scores) {
        out << s.trial_id << ',' << s.face_id << ',' << s.voice_id << ',' << label_text(s.same) << ','
            << data::format_double(s.score) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<TrialScore> load_scores(const std::filesystem::path& path) {
    const auto table = data::read_csv(path);
    const auto c_id = table.column("trial_id");
    const auto c_face = table.column("face_sample_id");
    const auto c_voice = table.column("voice_sample_id");
    const auto c_label = table.column("label");
    const auto c_score = table.column("score");
    std::vector<TrialScore> scores;
    for (const auto& row : table.rows) {
        TrialScore s{row[c_id], row[c_face], row[c_voice], std::nullopt, 0.0, std::nullopt, std::nullopt};
        if (row[c_label] == "same") {
            s.same = true;
        } else if (row[c_label] == "different") {
            s.same = false;
        } else if (row[c_label] != "unknown") {
            throw std::invalid_argument(path.string() + ": trial '" + s.trial_id + "' has label '" + row[c_label] +
                                        "'");
        }
        s.score = data::parse_double(row[c_score], "score of trial '" + s.trial_id + "'");
        if (!(s.score >= 0.0)) {
            throw std::invalid_argument(path.string() + ": trial '" + s.trial_id + "' has a negative score");
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

void write_polarized(const std::filesystem::path& path, const std::vector<TrialScore>& scores) {
    auto out = open_out(path);
    out << "trial_id,score,adjusted_score,confidence\n";
    for (const auto& s : scores) {
        out << s.trial_id << ',' << data::format_double(s.score) << ',';
        if (s.adjusted_score) out << data::format_double(*s.adjusted_score);
        out << ',';
        if (s.confidence) out << data::format_double(*s.confidence);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_det(const std::filesystem::path& path, const std::vector<DetPoint>& det) {
    auto out = open_out(path);
    out << "threshold,far,frr\n";
    for (const auto& p : det) {
        out << data::format_double(p.threshold) << ',' << data::format_double(p.far) << ','
            << data::format_double(p.frr) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fvm::score
