// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "fvm/data/pairs.hpp"
#include "fvm/data/synthetic.hpp"
#include "fvm/score/polarize.hpp"
#include "fvm/score/scoring.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fvm::score;
using fvm::data::AttributePrediction;
using fvm::data::Modality;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrialScore labelled(std::string id, bool same, double score) {
    return {id, id + "_f", id + "_v", same, score, std::nullopt, std::nullopt};
}

}  // namespace

TEST_CASE("trial_scores") {
    std::vector<double> zero(128, 0.0);
    std::vector<double> f345 = zero;
    f345[0] = 3.0;
    f345[1] = 4.0;
    std::vector<double> e0 = zero, e1 = zero;
    e0[0] = 1.0;
    e1[1] = 1.0;
    std::vector<TrialEmbedding> in{{{"t2", "f", "v", true}, f345, f345},
                                   {{"t1", "f", "v", false}, f345, zero},
                                   {{"t3", "f", "v", false}, e0, e1},
                                   {{"t0", "f", "v", true}, {}, e1},
                                   {{"t4", "f", "v", true}, e0, std::vector<double>(3, 0.0)}};
    auto out = trial_scores(in);
    REQUIRE(out.scores.size() == 3);
    CHECK(out.scores[0].trial_id == "t1");
    CHECK(out.scores[0].score == 5.0);
    CHECK(out.scores[1].score == 0.0);
    CHECK(out.scores[2].score == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    REQUIRE(out.errors.size() == 2);
    CHECK(out.errors[0].find("'t0'") != std::string::npos);
    CHECK(out.errors[1].find("'t4'") != std::string::npos);
}

TEST_CASE("compute_eer examples") {
    CHECK(compute_eer({0.1, 0.2}, {0.8, 0.9}).eer == 0.0);
    CHECK(compute_eer({0.1, 0.9}, {0.2, 0.8}).eer == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(compute_eer({0.1, 0.2, 0.3, 0.8}, {0.25, 0.7, 0.9, 0.95}).eer == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(compute_eer({0.9, 0.95}, {0.1, 0.2}).eer == 1.0);
    const std::vector<double> none, one{0.1}, nan{NAN};
    CHECK_THROWS_AS(compute_eer(none, one), std::invalid_argument);
    CHECK_THROWS_AS(compute_eer(one, none), std::invalid_argument);
    CHECK_THROWS_AS(compute_eer(nan, one), std::invalid_argument);
    std::vector<TrialScore> single{labelled("a", true, 0.1), labelled("b", true, 0.2)};
    CHECK_THROWS_AS(compute_eer(single), std::invalid_argument);
}

TEST_CASE("compute_eer matches the brute-force sweep") {
    std::mt19937_64 rng(2024);
    for (int set = 0; set < 50; ++set) {
        std::normal_distribution<double> t(0.0, 1.0), n(0.5 + 0.05 * set, 1.0);
        std::uniform_int_distribution<int> coarse(0, 40);
        std::vector<double> targets, nontargets;
        for (int i = 0; i < 1000; ++i) {
            // every fifth set uses a coarse grid so ties are common
            targets.push_back(set % 5 == 0 ? coarse(rng) / 10.0 : t(rng));
            nontargets.push_back(set % 5 == 0 ? coarse(rng) / 10.0 + 0.5 : n(rng));
        }
        const auto r = compute_eer(targets, nontargets);
        CHECK(std::abs(r.eer - fvm::oracle::brute_force_eer(targets, nontargets)) <= 1e-9);
        CHECK(std::abs(r.far - r.frr) <= 1e-9);
    }
}

TEST_CASE("compute_eer properties") {
    std::mt19937_64 rng(7);
    SUBCASE("perfect separation is exactly zero") {
        std::uniform_real_distribution<double> lo(0.0, 1.0), hi(1.5, 3.0);
        std::vector<double> t, n;
        for (int i = 0; i < 1000; ++i) {
            t.push_back(lo(rng));
            n.push_back(hi(rng));
        }
        CHECK(compute_eer(t, n).eer == 0.0);
    }
    SUBCASE("one common distribution gives about one half") {
        std::normal_distribution<double> d(1.0, 0.3);
        std::vector<double> t, n;
        for (int i = 0; i < 2000; ++i) {
            t.push_back(d(rng));
            n.push_back(d(rng));
        }
        CHECK(std::abs(compute_eer(t, n).eer - 0.5) <= 0.05);
    }
    SUBCASE("invariant under strictly increasing transforms") {
        std::normal_distribution<double> a(0.0, 1.0), b(0.7, 1.0);
        std::vector<double> t, n;
        for (int i = 0; i < 1000; ++i) {
            t.push_back(a(rng));
            n.push_back(b(rng));
        }
        const double base = compute_eer(t, n).eer;
        auto mapped = [](std::vector<double> v, auto f) {
            for (auto& x : v) x = f(x);
            return v;
        };
        auto expo = [](double x) { return std::exp(x); };
        auto cubic = [](double x) { return x * x * x + 2.0 * x + 10.0; };
        CHECK(compute_eer(mapped(t, expo), mapped(n, expo)).eer == base);
        CHECK(compute_eer(mapped(t, cubic), mapped(n, cubic)).eer == base);
    }
}

TEST_CASE("det_curve") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> a(0.0, 1.0), b(0.5, 1.0);
    std::vector<double> t, n;
    for (int i = 0; i < 500; ++i) {
        t.push_back(a(rng));
        n.push_back(b(rng));
    }
    const auto det = det_curve(t, n);
    CHECK(det.size() == 1002);
    CHECK(det.front().far == 0.0);
    CHECK(det.front().frr == 1.0);
    CHECK(det.back().far == 1.0);
    CHECK(det.back().frr == 0.0);
    for (std::size_t i = 1; i < det.size(); ++i) {
        CHECK(det[i].threshold > det[i - 1].threshold);
        CHECK(det[i].far >= det[i - 1].far);
        CHECK(det[i].frr <= det[i - 1].frr);
    }
    const auto r = compute_eer(t, n);
    bool bracketed = false;
    for (std::size_t i = 1; i < det.size(); ++i) {
        if (det[i - 1].threshold <= r.threshold && r.threshold <= det[i].threshold &&
            std::min(det[i - 1].far, det[i].far) <= r.far && r.far <= std::max(det[i - 1].far, det[i].far) &&
            std::min(det[i - 1].frr, det[i].frr) <= r.frr && r.frr <= std::max(det[i - 1].frr, det[i].frr)) {
            bracketed = true;
        }
    }
    CHECK(bracketed);
}

TEST_CASE("confidence") {
    CHECK(age_confidence(30, 30) == 1.0);
    CHECK(age_confidence(20, 45) == doctest::Approx(1.0 / 26.0).epsilon(1e-15));
    CHECK(age_confidence(1, 100) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK_THROWS_AS(age_confidence(0.5, 30), std::invalid_argument);
    CHECK_THROWS_AS(age_confidence(30, 101), std::invalid_argument);

    CHECK(gender_confidence(1.0, 1.0) == 1.0);
    CHECK(gender_confidence(0.5, 0.9) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gender_confidence(0.9, 0.2) == doctest::Approx(0.26).epsilon(1e-12));
    CHECK_THROWS_AS(gender_confidence(-0.1, 0.5), std::invalid_argument);

    ConfidenceConfig cfg;
    CHECK(combined_confidence(1.0, 1.0, cfg) == 1.0);
    CHECK(combined_confidence(0.01, 0.26, cfg) == doctest::Approx(0.135).epsilon(1e-12));
    ConfidenceConfig age_only{1.0, 0.0, 0.6, 1.2};
    CHECK(combined_confidence(0.123, 0.9, age_only) == 0.123);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> age(1.0, 100.0), p(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double a1 = age(rng), a2 = age(rng), p1 = p(rng), p2 = p(rng);
        const double ca = age_confidence(a1, a2);
        CHECK(ca > 0.0);
        CHECK(ca < 1.0);
        const double cg = gender_confidence(p1, p2);
        CHECK(cg == doctest::Approx(gender_confidence(p2, p1)).epsilon(1e-15));
        CHECK(cg == doctest::Approx(gender_confidence(1.0 - p1, 1.0 - p2)).epsilon(1e-12));
        const double c = combined_confidence(ca, cg, cfg);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("ConfidenceConfig validation") {
    CHECK_NOTHROW(ConfidenceConfig{}.validate());
    CHECK_THROWS_AS((ConfidenceConfig{0.6, 0.6, 0.6, 1.2}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ConfidenceConfig{1.2, -0.2, 0.6, 1.2}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ConfidenceConfig{0.5, 0.5, 1.1, 1.2}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ConfidenceConfig{0.5, 0.5, 0.6, 0.9}.validate()), std::invalid_argument);
}

TEST_CASE("polarize") {
    ConfidenceConfig cfg;
    CHECK(polarize(1.0, 0.9, cfg) == doctest::Approx(0.833333).epsilon(1e-6));
    CHECK(polarize(1.0, 0.9, cfg) == 1.0 / 1.2);
    CHECK(polarize(1.0, 0.4, cfg) == 1.2);
    CHECK(polarize(1.0, 0.6, cfg) == 1.2);  // boundary goes up
    ConfidenceConfig identity{0.5, 0.5, 0.6, 1.0};
    for (double c : {0.0, 0.6, 0.61, 1.0}) CHECK(polarize(0.77, c, identity) == 0.77);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> s(0.01, 3.0), c(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double x = s(rng), y = s(rng), conf = c(rng);
        const double ax = polarize(x, conf, cfg), ay = polarize(y, conf, cfg);
        if (conf > cfg.threshold) {
            CHECK(ax < x);
        } else {
            CHECK(ax > x);
        }
        CHECK((x < y) == (ax < ay));
    }
}

TEST_CASE("polarize_file") {
    const auto dir = fvm::testing::scratch_dir("polarize");
    std::vector<TrialScore> scores{labelled("t0", true, 0.4), labelled("t1", false, 1.3),
                                   labelled("t2", true, 0.9), labelled("t3", false, 0.2)};
    write_scores(dir / "scores.csv", scores);
    auto files = [&](const std::string& tag) {
        return PolarizeFiles{dir / (tag + "_adj.csv"), dir / (tag + "_pol.csv"), dir / (tag + "_audit.jsonl")};
    };

    SUBCASE("score file roundtrip") {
        CHECK(load_scores(dir / "scores.csv").size() == 4);
        write_scores(dir / "again.csv", load_scores(dir / "scores.csv"));
        CHECK(slurp(dir / "again.csv") == slurp(dir / "scores.csv"));
    }
    SUBCASE("all confident matches are divided") {
        std::vector<AttributePrediction> attrs;
        for (const auto& s : scores) {
            attrs.push_back({s.face_id, Modality::face, 40.0, 0.95});
            attrs.push_back({s.voice_id, Modality::voice, 40.0, 0.95});
        }
        fvm::data::write_attributes(dir / "attrs.jsonl", attrs);
        auto r = polarize_file(dir / "scores.csv", dir / "attrs.jsonl", ConfidenceConfig{}, files("all"));
        auto adj = load_scores(dir / "all_adj.csv");
        for (std::size_t i = 0; i < scores.size(); ++i) {
            CHECK(adj[i].score == scores[i].score / 1.2);
            CHECK(r.audit[i].direction == "down");
        }
    }
    SUBCASE("empty attributes pass everything through flagged") {
        std::ofstream(dir / "empty.jsonl").close();
        auto r = polarize_file(dir / "scores.csv", dir / "empty.jsonl", ConfidenceConfig{}, files("empty"));
        CHECK(slurp(dir / "empty_adj.csv") == slurp(dir / "scores.csv"));
        for (const auto& e : r.audit) CHECK(e.flagged);
        std::ifstream audit(dir / "empty_audit.jsonl");
        std::string line;
        std::size_t lines = 0;
        while (std::getline(audit, line)) {
            CHECK(line.find("\"flagged\":true") != std::string::npos);
            ++lines;
        }
        CHECK(lines == 4);
    }
    SUBCASE("alpha 1 leaves the score file byte-identical") {
        std::vector<AttributePrediction> attrs;
        double age = 20.0;
        for (const auto& s : scores) {
            attrs.push_back({s.face_id, Modality::face, age, 0.9});
            attrs.push_back({s.voice_id, Modality::voice, age += 7.0, 0.2});
        }
        fvm::data::write_attributes(dir / "attrs1.jsonl", attrs);
        polarize_file(dir / "scores.csv", dir / "attrs1.jsonl", ConfidenceConfig{0.5, 0.5, 0.6, 1.0}, files("one"));
        CHECK(slurp(dir / "one_adj.csv") == slurp(dir / "scores.csv"));
    }
}

TEST_CASE("polarization on a synthetic trial list") {
    fvm::data::SyntheticSpec spec;
    spec.face_dim = 8;
    spec.voice_dim = 8;
    spec.n_train_identities = 4;
    spec.n_test_identities = 20;
    const auto data = fvm::data::gen_synthetic(spec);
    const auto trials = fvm::data::make_trials(data.records, 1);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> target(1.0, 0.3), nontarget(1.3, 0.3);
    std::vector<TrialScore> scores;
    for (const auto& t : trials) {
        scores.push_back({t.trial_id, t.face_id, t.voice_id, t.same, std::abs(*t.same ? target(rng) : nontarget(rng)),
                          std::nullopt, std::nullopt});
    }
    const auto r = polarize_scores(scores, data.attributes, ConfidenceConfig{});
    std::size_t down = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        CHECK_FALSE(r.audit[i].flagged);
        if (r.audit[i].direction == "down") {
            ++down;
            CHECK(*r.scores[i].adjusted_score < scores[i].score);
        } else {
            CHECK(*r.scores[i].adjusted_score > scores[i].score);
        }
    }
    CHECK(down > 0);
    CHECK(down < scores.size());
    const double raw = compute_eer(r.scores, ScoreField::raw).eer;
    const double adjusted = compute_eer(r.scores, ScoreField::adjusted).eer;
    CHECK(raw != adjusted);
    CHECK(std::isfinite(raw));
    CHECK(std::isfinite(adjusted));
}
