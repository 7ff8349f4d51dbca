// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fvm/diff/adam.hpp"
#include "fvm/diff/grad_check.hpp"
#include "fvm/fop/checkpoint.hpp"
#include "fvm/fop/model.hpp"
#include "fvm/loss/pair_loss.hpp"
#include "test_util.hpp"

using namespace fvm;
using diff::Array;
using diff::NormMode;
using diff::Tape;
using diff::Var;
using fop::Stage;
using fvm::testing::random_array;

namespace {

fop::ModelConfig small_config(fop::FusionKind kind = fop::FusionKind::conv) {
    fop::ModelConfig c;
    c.face_dim = 24;
    c.voice_dim = 12;
    c.update_fusion = kind;
    return c;
}

void zero(fop::Linear& l) {
    l.weight.value.fill(0.0);
    l.bias.value.fill(0.0);
}

void set_identity(fop::Linear& l) {
    zero(l);
    for (std::size_t i = 0; i < std::min(l.weight.value.dim(0), l.weight.value.dim(1)); ++i) {
        l.weight.value.at(i, i) = 1.0;
    }
}

Var loss_of(Tape& tape, const Array& faces, const Array& voices, const std::vector<std::size_t>& ids,
            fop::DualBranchModel& m, Stage stage) {
    auto out = fop::forward_batch(tape, faces, voices, m, stage, NormMode::train);
    return loss::total_loss(out.embedding, ids, tape.parameter(m.similarity_head.weight),
                            tape.parameter(m.similarity_head.bias), {})
        .loss;
}

std::vector<Array> snapshot(std::vector<diff::Parameter*> params) {
    std::vector<Array> out;
    for (auto* p : params) out.push_back(p->value);
    return out;
}

void train_steps(fop::DualBranchModel& m, Stage stage, int steps) {
    const auto faces = random_array({6, 24}, 70);
    const auto voices = random_array({6, 12}, 71);
    const std::vector<std::size_t> ids{0, 1, 0, 1, 2, 2};
    diff::Adam opt(m.trainable_parameters(stage));
    for (int s = 0; s < steps; ++s) {
        opt.zero_grad();
        Tape tape;
        tape.backward(loss_of(tape, faces, voices, ids, m, stage));
        opt.step();
    }
}

}  // namespace

TEST_CASE("project_features") {
    auto m = fop::init_model(small_config(), 1);
    SUBCASE("zero weights give zero projections") {
        zero(m.frozen_branch.face);
        zero(m.frozen_branch.voice);
        Tape tape;
        auto p = fop::project_features(tape, tape.constant(random_array({2, 24}, 2)),
                                       tape.constant(random_array({2, 12}, 3)), m.frozen_branch);
        CHECK(p.face.value() == Array({2, 128}));
        CHECK(p.voice.value() == Array({2, 128}));
    }
    SUBCASE("identity weights on a 128-d face pass it through") {
        fop::ModelConfig c = small_config();
        c.face_dim = 128;
        auto m128 = fop::init_model(c, 4);
        set_identity(m128.frozen_branch.face);
        Tape tape;
        auto x = random_array({3, 128}, 5);
        auto p = fop::project_features(tape, tape.constant(x), tape.constant(random_array({3, 12}, 6)),
                                       m128.frozen_branch);
        CHECK(p.face.value() == x);
    }
    SUBCASE("gradient through the projection") {
        auto r = diff::grad_check(
            [&m](Tape& t, std::span<const Var> in) {
                auto p = fop::project_features(t, in[0], in[1], m.frozen_branch);
                return diff::sum(diff::mul(diff::tanh(p.face), p.voice));
            },
            {random_array({2, 24}, 7), random_array({2, 12}, 8)}, 1e-6);
        CHECK(r.max_rel_error < 1e-5);
    }
    SUBCASE("dimension mismatch is rejected") {
        Tape tape;
        CHECK_THROWS_AS(fop::project_features(tape, tape.constant(Array({2, 23})), tape.constant(Array({2, 12})),
                                              m.frozen_branch),
                        std::invalid_argument);
        CHECK_THROWS_AS(fop::project_features(tape, tape.constant(Array({2, 24})), tape.constant(Array({3, 12})),
                                              m.frozen_branch),
                        std::invalid_argument);
    }
}

TEST_CASE("conv_gate_fuse") {
    auto m = fop::init_model(small_config(), 9);
    auto& head = std::get<fop::ConvHead>(m.update_branch.head);
    SUBCASE("all-zero conv weights gate at one half") {
        head.kernels.value.fill(0.0);
        head.gate_kernels.value.fill(0.0);
        set_identity(head.compress);
        Tape tape;
        auto f = random_array({2, 128}, 10);
        auto v = random_array({2, 128}, 11);
        auto out = fop::conv_gate_fuse(tape, {tape.constant(f), tape.constant(v)}, m.update_branch, NormMode::train);
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < 128; ++c) CHECK(out.value().at(r, c) == 0.5 * f.at(r, c));
        }
        zero(head.compress);
        Tape tape2;
        auto zero_out =
            fop::conv_gate_fuse(tape2, {tape2.constant(f), tape2.constant(v)}, m.update_branch, NormMode::train);
        CHECK(zero_out.value() == Array({2, 128}));
    }
    SUBCASE("output is 128-d") {
        for (std::size_t b : {1, 2, 5}) {
            Tape tape;
            auto out = fop::conv_gate_fuse(
                tape, {tape.constant(random_array({b, 128}, b)), tape.constant(random_array({b, 128}, b + 1))},
                m.update_branch, b == 1 ? NormMode::eval : NormMode::train);
            CHECK(out.shape() == diff::Shape{b, 128});
        }
    }
    SUBCASE("gradient through the gated path") {
        auto r = diff::grad_check_parameters(
            [&](Tape& t) {
                fop::Projection p{t.constant(random_array({3, 128}, 12)), t.constant(random_array({3, 128}, 13))};
                auto out = fop::conv_gate_fuse(t, p, m.update_branch, NormMode::train);
                return diff::sum(diff::mul(out, t.constant(random_array({3, 128}, 14))));
            },
            m.update_branch.parameters(), {.eps = 1e-6, .max_coordinates = 12, .seed = 1});
        CHECK(r.max_rel_error < 1e-4);
        auto inputs = diff::grad_check(
            [&](Tape& t, std::span<const Var> in) {
                auto out = fop::conv_gate_fuse(t, {in[0], in[1]}, m.update_branch, NormMode::train);
                return diff::sum(diff::mul(out, t.constant(random_array({3, 128}, 15))));
            },
            {random_array({3, 128}, 16), random_array({3, 128}, 17)}, 1e-6);
        CHECK(inputs.max_rel_error < 1e-4);
    }
    SUBCASE("wrong fusion kind") {
        Tape tape;
        fop::Projection p{tape.constant(Array({2, 128})), tape.constant(Array({2, 128}))};
        CHECK_THROWS_AS(fop::conv_gate_fuse(tape, p, m.frozen_branch, NormMode::train), std::invalid_argument);
        CHECK_THROWS_AS(fop::attention_fuse(tape, p, m.update_branch), std::invalid_argument);
    }
}

TEST_CASE("attention_fuse") {
    auto m = fop::init_model(small_config(), 18);
    auto& head = std::get<fop::AttentionHead>(m.frozen_branch.head);
    set_identity(head.out);
    auto f = random_array({2, 128}, 19);
    auto v = random_array({2, 128}, 20);
    SUBCASE("equal scores average the modalities") {
        zero(head.scores);
        Tape tape;
        auto out = fop::attention_fuse(tape, {tape.constant(f), tape.constant(v)}, m.frozen_branch);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.value()[i] == doctest::Approx(0.5 * (f[i] + v[i])));
    }
    SUBCASE("a large score gap selects the face") {
        zero(head.scores);
        head.scores.bias.value[0] = 20.0;
        Tape tape;
        auto out = fop::attention_fuse(tape, {tape.constant(f), tape.constant(v)}, m.frozen_branch);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::fabs(out.value()[i] - f[i]) <= 1e-6);
    }
    SUBCASE("gradient") {
        auto fresh = fop::init_model(small_config(), 21);
        auto r = diff::grad_check(
            [&](Tape& t, std::span<const Var> in) {
                auto out = fop::attention_fuse(t, {in[0], in[1]}, fresh.frozen_branch);
                return diff::sum(diff::mul(out, t.constant(random_array({2, 128}, 22))));
            },
            {f, v}, 1e-6);
        CHECK(r.max_rel_error < 1e-5);
    }
}

TEST_CASE("scalar fusion") {
    auto m = fop::init_model(small_config(fop::FusionKind::scalar), 23);
    auto& head = std::get<fop::ScalarHead>(m.update_branch.head);
    set_identity(head.out);
    Tape tape;
    auto f = random_array({1, 128}, 24);
    auto v = random_array({1, 128}, 25);
    auto out = fop::scalar_fuse(tape, {tape.constant(f), tape.constant(v)}, m.update_branch);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.value()[i] == doctest::Approx(0.5 * (f[i] + v[i])));
}

TEST_CASE("combine_dual") {
    Tape tape;
    auto a = tape.constant(random_array({2, 128}, 26));
    auto b = tape.constant(random_array({2, 128}, 27));
    SUBCASE("endpoints and midpoint of the blend") {
        CHECK(fop::blend(tape.constant(Array({2, 128}, 1.0)), a, b).value() == a.value());
        CHECK(fop::blend(tape.constant(Array({2, 128}, 0.0)), a, b).value() == b.value());
        auto mid = fop::blend(tape.constant(Array({2, 128}, 0.5)), a, b).value();
        for (std::size_t i = 0; i < mid.size(); ++i) {
            CHECK(mid[i] == doctest::Approx(0.5 * (a.value()[i] + b.value()[i])));
        }
    }
    SUBCASE("weights stay inside (0, 1) and the result is convex") {
        auto m = fop::init_model(small_config(), 28);
        auto c = fop::combine_dual(tape, a, b, m);
        for (std::size_t i = 0; i < c.weights.value().size(); ++i) {
            CHECK(c.weights.value()[i] > 0.0);
            CHECK(c.weights.value()[i] < 1.0);
            const double lo = std::min(a.value()[i], b.value()[i]);
            const double hi = std::max(a.value()[i], b.value()[i]);
            CHECK(c.embedding.value()[i] >= lo - 1e-15);
            CHECK(c.embedding.value()[i] <= hi + 1e-15);
        }
    }
}

TEST_CASE("forward_batch") {
    auto m = fop::init_model(small_config(), 29);
    SUBCASE("single pair") {
        Tape tape;
        auto out =
            fop::forward_batch(tape, random_array({1, 24}, 30), random_array({1, 12}, 31), m, Stage::stage1,
                               NormMode::eval);
        CHECK(out.embedding.shape() == diff::Shape{1, 128});
    }
    SUBCASE("stage2 needs stage1 first") {
        Tape tape;
        CHECK_THROWS_AS(fop::forward_batch(tape, random_array({2, 24}, 32), random_array({2, 12}, 33), m,
                                           Stage::stage2, NormMode::train),
                        std::invalid_argument);
    }
    SUBCASE("stage2 differs from stage1 and never moves the baseline") {
        m.completed_stage = 1;
        const auto baseline = snapshot(m.frozen_branch.parameters());
        Tape t1, t2;
        auto f = random_array({4, 24}, 34);
        auto v = random_array({4, 12}, 35);
        auto s1 = fop::forward_batch(t1, f, v, m, Stage::stage1, NormMode::eval).embedding.value();
        auto s2 = fop::forward_batch(t2, f, v, m, Stage::stage2, NormMode::eval).embedding.value();
        CHECK_FALSE(s1 == s2);
        // not frozen explicitly: stage2 still keeps the baseline out of the graph
        train_steps(m, Stage::stage2, 1);
        CHECK(snapshot(m.frozen_branch.parameters()) == baseline);
    }
}

TEST_CASE("freeze_branch") {
    auto m = fop::init_model(small_config(), 36);
    train_steps(m, Stage::stage1, 2);
    m.completed_stage = 1;
    SUBCASE("frozen arrays survive 10 steps bit-identical, update arrays change") {
        fop::freeze_branch(m, fop::BranchId::frozen);
        const auto frozen = snapshot(m.frozen_branch.parameters());
        const auto update = snapshot(m.update_branch.parameters());
        train_steps(m, Stage::stage2, 10);
        CHECK(snapshot(m.frozen_branch.parameters()) == frozen);
        const auto after = snapshot(m.update_branch.parameters());
        std::size_t changed = 0;
        for (std::size_t i = 0; i < after.size(); ++i) changed += after[i] == update[i] ? 0 : 1;
        CHECK(changed == after.size());
    }
    SUBCASE("optimizer list excludes frozen parameters") {
        fop::freeze_branch(m, fop::BranchId::frozen);
        for (auto* p : m.trainable_parameters(Stage::stage1)) CHECK(p->name.rfind("frozen.", 0) != 0);
    }
    SUBCASE("double freeze is idempotent") {
        fop::freeze_branch(m, fop::BranchId::frozen);
        const auto once = fop::serialize_checkpoint(m);
        fop::freeze_branch(m, fop::BranchId::frozen);
        CHECK(fop::serialize_checkpoint(m) == once);
    }
    SUBCASE("uninitialized branch is rejected") {
        fop::DualBranchModel empty;
        CHECK_THROWS_AS(fop::freeze_branch(empty, fop::BranchId::frozen), std::invalid_argument);
    }
}

TEST_CASE("full-model gradient check") {
    // Narrow embeddings keep every coordinate's gradient well above central-difference
    // roundoff (about 3e-10 absolute at loss ~2), so all coordinates can be checked.
    const auto faces = random_array({6, 24}, 40, -4, 4);
    const auto voices = random_array({6, 12}, 41, -4, 4);
    const std::vector<std::size_t> ids{0, 1, 0, 1, 2, 2};
    for (auto kind : {fop::FusionKind::conv, fop::FusionKind::attention, fop::FusionKind::scalar}) {
        CAPTURE(fop::to_string(kind));
        auto cfg = small_config(kind);
        cfg.embed_dim = 8;
        auto m = fop::init_model(cfg, 42);
        auto stage1 = diff::grad_check_parameters(
            [&](Tape& t) { return loss_of(t, faces, voices, ids, m, Stage::stage1); },
            m.trainable_parameters(Stage::stage1));
        INFO(stage1.worst);
        CHECK(stage1.max_rel_error < 1e-4);
        m.completed_stage = 1;
        fop::freeze_branch(m, fop::BranchId::frozen);
        auto stage2 = diff::grad_check_parameters(
            [&](Tape& t) { return loss_of(t, faces, voices, ids, m, Stage::stage2); },
            m.trainable_parameters(Stage::stage2));
        INFO(stage2.worst);
        CHECK(stage2.max_rel_error < 1e-4);
    }
}

TEST_CASE("trial_embeddings") {
    auto m = fop::init_model(small_config(), 43);
    auto f = random_array({5, 24}, 44);
    auto v = random_array({5, 12}, 45);
    auto e1 = fop::trial_embeddings(f, v, m, Stage::stage1);
    CHECK(e1.faces.shape() == diff::Shape{5, 128});
    for (std::size_t r = 0; r < 5; ++r) {
        double n = 0.0;
        for (std::size_t c = 0; c < 128; ++c) n += e1.voices.at(r, c) * e1.voices.at(r, c);
        CHECK(n == doctest::Approx(1.0));
    }
    m.completed_stage = 1;
    const auto before = fop::serialize_checkpoint(m);
    auto e2 = fop::trial_embeddings(f, v, m, Stage::stage2);
    CHECK_FALSE(e2.faces == e1.faces);
    CHECK(fop::serialize_checkpoint(m) == before);
}

TEST_CASE("checkpoint") {
    auto m = fop::init_model(small_config(), 50);
    train_steps(m, Stage::stage1, 1);
    m.completed_stage = 1;
    fop::freeze_branch(m, fop::BranchId::frozen);
    const auto dir = fvm::testing::scratch_dir("checkpoint");

    SUBCASE("save, load, save gives identical bytes") {
        fop::save_checkpoint(m, dir / "a.json");
        auto loaded = fop::load_checkpoint(dir / "a.json");
        fop::save_checkpoint(loaded, dir / "b.json");
        std::ifstream a(dir / "a.json"), b(dir / "b.json");
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
        CHECK(loaded.seed == 50);
        CHECK(loaded.completed_stage == 1);
        CHECK(loaded.frozen_branch.frozen);
        auto orig = m.named_arrays();
        auto back = loaded.named_arrays();
        for (std::size_t i = 0; i < orig.size(); ++i) CHECK(*orig[i].second == *back[i].second);
    }
    SUBCASE("a stage1 checkpoint trains in stage2") {
        fop::save_checkpoint(m, dir / "s1.json");
        auto loaded = fop::load_checkpoint(dir / "s1.json");
        const auto frozen = snapshot(loaded.frozen_branch.parameters());
        train_steps(loaded, Stage::stage2, 2);
        CHECK(snapshot(loaded.frozen_branch.parameters()) == frozen);
    }
    SUBCASE("corrupted data length") {
        auto text = fop::serialize_checkpoint(m);
        const auto pos = text.find("\"data\": \"") + 9;
        text.erase(pos, 12);
        CHECK_THROWS_AS(fop::deserialize_checkpoint(text), fop::CheckpointError);
    }
    SUBCASE("declared shape disagrees with hyperparameters") {
        auto text = fop::serialize_checkpoint(m);
        const auto pos = text.find("\"face_dim\": 24");
        text.replace(pos, 14, "\"face_dim\": 25");
        CHECK_THROWS_AS(fop::deserialize_checkpoint(text), fop::CheckpointError);
    }
    SUBCASE("version mismatch") {
        auto text = fop::serialize_checkpoint(m);
        const auto pos = text.find("\"version\": 1");
        text.replace(pos, 12, "\"version\": 7");
        try {
            fop::deserialize_checkpoint(text);
            FAIL("expected rejection");
        } catch (const fop::CheckpointError& e) {
            CHECK(std::string(e.what()).find("version 7") != std::string::npos);
        }
    }
    SUBCASE("truncated file") {
        auto text = fop::serialize_checkpoint(m);
        CHECK_THROWS_AS(fop::deserialize_checkpoint(text.substr(0, text.size() / 2)), fop::CheckpointError);
        CHECK_THROWS_AS(fop::load_checkpoint(dir / "missing.json"), fop::CheckpointError);
    }
}
