// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fvm/diff/grad_check.hpp"
#include "fvm/diff/ops.hpp"
#include "fvm/loss/pair_loss.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fvm;
using diff::Array;
using diff::Tape;
using diff::Var;
using fvm::testing::random_array;

namespace {

struct Head {
    Array weight;
    Array bias;
};

Head random_head(std::size_t d, std::uint64_t seed) {
    return {random_array({d, d}, seed, -0.3, 0.3), random_array({d}, seed + 1, -0.1, 0.1)};
}

Head identity_head(std::size_t d) {
    Head h{Array({d, d}), Array({d})};
    for (std::size_t i = 0; i < d; ++i) h.weight.at(i, i) = 1.0;
    return h;
}

double run_total(const Array& x, const std::vector<std::size_t>& ids, const Head& h, const loss::LossConfig& cfg) {
    Tape tape;
    return loss::total_loss(tape.constant(x), ids, tape.constant(h.weight), tape.constant(h.bias), cfg)
        .loss.value()
        .item();
}

}  // namespace

TEST_CASE("similarity_matrix") {
    SUBCASE("identical rows have similarity 1") {
        Tape tape;
        auto h = random_head(8, 1);
        auto x = random_array({1, 8}, 2);
        Array two({2, 8});
        for (std::size_t c = 0; c < 8; ++c) two.at(0, c) = two.at(1, c) = x[c];
        auto s = loss::similarity_matrix(tape.constant(two), tape.constant(h.weight), tape.constant(h.bias));
        CHECK(s.value().at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("disjoint support gives 0") {
        Tape tape;
        auto h = identity_head(4);
        auto s = loss::similarity_matrix(tape.constant(Array::from_rows({{1, 2, 0, 0}, {0, 0, 3, 1}})),
                                         tape.constant(h.weight), tape.constant(h.bias),
                                         loss::HeadActivation::relu);
        CHECK(s.value().at(0, 1) == 0.0);
        CHECK(s.value().at(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("matches the scalar-loop oracle on a 4x128 batch") {
        Tape tape;
        auto h = random_head(128, 3);
        auto x = random_array({4, 128}, 4);
        auto s = loss::similarity_matrix(tape.constant(x), tape.constant(h.weight), tape.constant(h.bias));
        auto ref = oracle::similarity(x, h.weight, h.bias, loss::HeadActivation::sigmoid);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(std::fabs(s.value().at(i, j) - ref[i][j]) <= 1e-12);
                CHECK(s.value().at(i, j) >= 0.0);
                CHECK(s.value().at(i, j) <= 1.0 + 1e-12);
            }
        }
    }
    SUBCASE("batch of one is rejected") {
        Tape tape;
        auto h = identity_head(3);
        CHECK_THROWS_AS(loss::similarity_matrix(tape.constant(Array({1, 3}, 1.0)), tape.constant(h.weight),
                                                tape.constant(h.bias)),
                        std::invalid_argument);
    }
}

TEST_CASE("pair_masks") {
    SUBCASE("[a,a]") {
        std::vector<std::size_t> ids{0, 0};
        auto m = loss::pair_masks(ids);
        CHECK(m.positives == 2);
        CHECK(m.negatives == 0);
        CHECK(m.positive.at(0, 1) == 1.0);
        CHECK(m.positive.at(1, 0) == 1.0);
    }
    SUBCASE("[a,b]") {
        std::vector<std::size_t> ids{0, 1};
        auto m = loss::pair_masks(ids);
        CHECK(m.positives == 0);
        CHECK(m.negatives == 2);
    }
    SUBCASE("[a,a,b]") {
        std::vector<std::size_t> ids{0, 0, 1};
        auto m = loss::pair_masks(ids);
        CHECK(m.positive == Array::from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}));
        CHECK(m.negative == Array::from_rows({{0, 0, 1}, {0, 0, 1}, {1, 1, 0}}));
    }
}

TEST_CASE("weighted_pair_losses") {
    loss::LossConfig cfg;
    SUBCASE("positive pair at theta contributes 1") {
        Tape tape;
        std::vector<std::size_t> ids{0, 0};
        auto m = loss::pair_masks(ids);
        // one ordered pair only
        m.positive.at(1, 0) = 0.0;
        m.positives = 1;
        auto t = loss::weighted_pair_losses(tape.constant(Array({2, 2}, cfg.theta)), m, cfg);
        CHECK(t.l_plus.value().item() == 1.0);
        CHECK(t.l_minus.value().item() == 0.0);
    }
    SUBCASE("negative pair at theta contributes 1") {
        Tape tape;
        std::vector<std::size_t> ids{0, 1};
        auto m = loss::pair_masks(ids);
        m.negative.at(1, 0) = 0.0;
        m.negatives = 1;
        auto t = loss::weighted_pair_losses(tape.constant(Array({2, 2}, cfg.theta)), m, cfg);
        CHECK(t.l_minus.value().item() == 1.0);
    }
    SUBCASE("random 5-sample batch matches the oracle") {
        Tape tape;
        auto h = random_head(6, 5);
        auto x = random_array({5, 6}, 6);
        std::vector<std::size_t> ids{0, 1, 0, 2, 1};
        auto s = loss::similarity_matrix(tape.constant(x), tape.constant(h.weight), tape.constant(h.bias));
        auto t = loss::weighted_pair_losses(s, loss::pair_masks(ids), cfg);
        auto ref = oracle::loss_parts(x, ids, h.weight, h.bias, cfg);
        CHECK(std::fabs(t.l_plus.value().item() - ref.l_plus) <= 1e-9);
        CHECK(std::fabs(t.l_minus.value().item() - ref.l_minus) <= 1e-9 * std::max(1.0, ref.l_minus));
    }
    SUBCASE("exponent clamp keeps the value finite") {
        Tape tape;
        std::vector<std::size_t> ids{0, 1};
        loss::LossConfig big = cfg;
        big.beta = 1e4;
        auto t = loss::weighted_pair_losses(tape.constant(Array({2, 2}, 1.0)), loss::pair_masks(ids), big);
        CHECK(t.l_minus.value().item() == doctest::Approx(2.0 * std::exp(60.0)));
    }
    SUBCASE("summands are monotone in S") {
        std::vector<std::size_t> ids{0, 0, 1};
        auto m = loss::pair_masks(ids);
        double prev_plus = INFINITY, prev_minus = -INFINITY;
        for (double s = 0.0; s <= 1.0; s += 0.1) {
            Tape tape;
            auto t = loss::weighted_pair_losses(tape.constant(Array({3, 3}, s)), m, cfg);
            CHECK(t.l_plus.value().item() < prev_plus);
            CHECK(t.l_minus.value().item() > prev_minus);
            prev_plus = t.l_plus.value().item();
            prev_minus = t.l_minus.value().item();
        }
    }
}

TEST_CASE("orthogonal_term") {
    std::vector<std::size_t> ids{0, 0, 1};
    auto m = loss::pair_masks(ids);
    SUBCASE("S+ = 1, S- = 0") {
        Tape tape;
        auto o = loss::orthogonal_term(tape.constant(Array::from_rows({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}})), m);
        CHECK(o.value.value().item() == 1.0);
    }
    SUBCASE("S+ = S- = 0.5") {
        Tape tape;
        auto o = loss::orthogonal_term(tape.constant(Array({3, 3}, 0.5)), m);
        CHECK(o.value.value().item() == doctest::Approx(1.65).epsilon(1e-15));
    }
    SUBCASE("random batch matches the oracle") {
        Tape tape;
        auto h = random_head(5, 7);
        auto x = random_array({6, 5}, 8);
        std::vector<std::size_t> six{0, 1, 2, 0, 1, 3};
        auto s = loss::similarity_matrix(tape.constant(x), tape.constant(h.weight), tape.constant(h.bias));
        auto o = loss::orthogonal_term(s, loss::pair_masks(six));
        CHECK(std::fabs(o.value.value().item() - oracle::loss_parts(x, six, h.weight, h.bias, {}).orthogonal) <=
              1e-12);
    }
    SUBCASE("missing classes fall back") {
        Tape tape;
        std::vector<std::size_t> same{0, 0};
        auto o = loss::orthogonal_term(tape.constant(Array({2, 2}, 0.3)), loss::pair_masks(same));
        CHECK(o.mean_negative == 0.0);
        CHECK(o.value.value().item() == doctest::Approx(1.7));
        std::vector<std::size_t> distinct{0, 1};
        auto o2 = loss::orthogonal_term(tape.constant(Array({2, 2}, 0.3)), loss::pair_masks(distinct));
        CHECK(o2.mean_positive == 1.0);
        CHECK(o2.value.value().item() == doctest::Approx(1.09));
    }
}

TEST_CASE("total_loss") {
    loss::LossConfig cfg;
    SUBCASE("hand-computed pair of same-identity rows") {
        // identical rows: S01 = 1, no negatives
        Tape tape;
        auto h = random_head(4, 9);
        Array x({2, 4}, 0.25);
        std::vector<std::size_t> ids{3, 3};
        auto r = loss::total_loss(tape.constant(x), ids, tape.constant(h.weight), tape.constant(h.bias), cfg);
        // two ordered positive pairs, each exp(-0.8)
        const double expected = 0.5 * std::log(1.0 + 2.0 * std::exp(-0.8)) + 1.0;
        CHECK(r.loss.value().item() == doctest::Approx(expected).epsilon(1e-14));
        CHECK(r.diagnostics.l_minus == 0.0);
    }
    SUBCASE("substitution example") {
        const double l = std::log1p(1.0) / 2.0 + std::log1p(1.0) / 50.0 + 1.0;
        CHECK(l == doctest::Approx(1.360436).epsilon(1e-6));
    }
    SUBCASE("agrees with the double-loop oracle on 100 random batches") {
        std::mt19937_64 rng(11);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t b = 2 + trial % 15;
            const std::size_t d = 8 + trial % 5;
            std::vector<std::size_t> ids(b);
            const std::size_t classes = 1 + rng() % b;
            for (auto& id : ids) id = rng() % classes;
            if (trial == 0) std::fill(ids.begin(), ids.end(), 0);
            if (trial == 1) std::iota(ids.begin(), ids.end(), 0);
            auto h = random_head(d, 100 + trial);
            auto x = random_array({b, d}, 300 + trial, -2, 2);
            worst = std::max(worst, std::fabs(run_total(x, ids, h, cfg) - oracle::loss_oracle(x, ids, h.weight,
                                                                                              h.bias, cfg)));
        }
        CHECK(worst <= 1e-9);
    }
    SUBCASE("bounds L >= O >= 1 and O <= 2.3") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Tape tape;
            auto h = random_head(6, 500 + seed);
            std::vector<std::size_t> ids{0, 1, 0, 1, 2, 2, 3};
            auto r = loss::total_loss(tape.constant(random_array({7, 6}, 600 + seed, -3, 3)), ids,
                                      tape.constant(h.weight), tape.constant(h.bias), cfg);
            CHECK(r.diagnostics.orthogonal >= 1.0);
            CHECK(r.diagnostics.orthogonal <= 2.3);
            CHECK(r.loss.value().item() >= r.diagnostics.orthogonal);
        }
    }
    SUBCASE("permutation invariance") {
        auto h = random_head(6, 21);
        auto x = random_array({6, 6}, 22);
        std::vector<std::size_t> ids{0, 1, 0, 2, 1, 2};
        std::vector<std::size_t> order{4, 2, 5, 0, 3, 1};
        Array xp({6, 6});
        std::vector<std::size_t> idp(6);
        for (std::size_t i = 0; i < 6; ++i) {
            idp[i] = ids[order[i]];
            for (std::size_t c = 0; c < 6; ++c) xp.at(i, c) = x.at(order[i], c);
        }
        CHECK(std::fabs(run_total(x, ids, h, cfg) - run_total(xp, idp, h, cfg)) <= 1e-12);
    }
    SUBCASE("without pair weighting only the orthogonal term remains") {
        auto h = random_head(5, 23);
        auto x = random_array({4, 5}, 24);
        std::vector<std::size_t> ids{0, 0, 1, 1};
        loss::LossConfig off = cfg;
        off.pair_weighting = false;
        CHECK(std::fabs(run_total(x, ids, h, off) - oracle::loss_oracle(x, ids, h.weight, h.bias, off)) <= 1e-12);
    }
    SUBCASE("gradient with respect to embeddings and head") {
        auto h = random_head(6, 25);
        std::vector<std::size_t> ids{0, 1, 0, 2, 1};
        auto r = diff::grad_check(
            [&](Tape&, std::span<const Var> in) { return loss::total_loss(in[0], ids, in[1], in[2], cfg).loss; },
            {random_array({5, 6}, 26), h.weight, h.bias}, 1e-6);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("config validation") {
        loss::LossConfig bad;
        bad.alpha = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = {};
        bad.theta = 1.5;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        CHECK_THROWS_AS(loss::parse_head_activation("gelu"), std::invalid_argument);
    }
}
