// SPDX-License-Identifier: Apache-2.0
#include "fvm/fop/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fvm::fop {

using diff::Array;
using diff::NormMode;
using diff::Parameter;
using diff::Tape;
using diff::Var;

FusionKind parse_fusion(std::string_view name) {
    if (name == "attention" || name == "att") return FusionKind::attention;
    if (name == "conv") return FusionKind::conv;
    if (name == "scalar" || name == "w") return FusionKind::scalar;
    throw std::invalid_argument("unknown fusion kind '" + std::string(name) + "'");
}

std::string_view to_string(FusionKind kind) {
    switch (kind) {
        case FusionKind::attention: return "attention";
        case FusionKind::conv: return "conv";
        case FusionKind::scalar: return "scalar";
    }
    return "attention";
}

void ModelConfig::validate() const {
    if (face_dim == 0 || voice_dim == 0 || embed_dim == 0) {
        throw std::invalid_argument("model: dimensions must be positive");
    }
    if (conv_channels == 0) throw std::invalid_argument("model: conv_channels must be positive");
    if (conv_kernel == 0 || conv_kernel % 2 == 0) throw std::invalid_argument("model: conv_kernel must be odd");
    if (conv_kernel > 2 * embed_dim) throw std::invalid_argument("model: conv_kernel exceeds the fused length");
}

Var Linear::apply(Tape& tape, Var x) {
    return diff::add_row(diff::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

namespace {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Array uniform(diff::Shape shape, std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Array a(std::move(shape));
        for (auto& v : a.data()) v = dist(rng_);
        return a;
    }

    Linear linear(const std::string& name, std::size_t in, std::size_t out) {
        return {Parameter(name + ".weight", uniform({in, out}, in, out)), Parameter(name + ".bias", Array({out}))};
    }

private:
    std::mt19937_64 rng_;
};

Branch make_branch(const std::string& name, FusionKind kind, const ModelConfig& cfg, Initializer& init) {
    const std::size_t d = cfg.embed_dim;
    Branch b;
    b.name = name;
    b.kind = kind;
    b.face = init.linear(name + ".face", cfg.face_dim, d);
    b.voice = init.linear(name + ".voice", cfg.voice_dim, d);
    switch (kind) {
        case FusionKind::attention:
            b.head = AttentionHead{init.linear(name + ".att.scores", 2 * d, 2), init.linear(name + ".att.out", d, d)};
            break;
        case FusionKind::conv: {
            const std::size_t c = cfg.conv_channels;
            const std::size_t k = cfg.conv_kernel;
            ConvHead h;
            h.kernels = Parameter(name + ".conv.kernels", init.uniform({c, 1, k}, k, c * k));
            h.gamma = Parameter(name + ".conv.bn_gamma", Array({c}, 1.0));
            h.beta = Parameter(name + ".conv.bn_beta", Array({c}));
            h.stats = diff::RunningStats::fresh(c);
            h.gate_kernels = Parameter(name + ".conv.gate_kernels", init.uniform({1, c, k}, c * k, k));
            h.gate_bias = Parameter(name + ".conv.gate_bias", Array({1}));
            h.compress = init.linear(name + ".conv.compress", 2 * d, d);
            b.head = std::move(h);
            break;
        }
        case FusionKind::scalar:
            b.head = ScalarHead{Parameter(name + ".scalar.logit", Array({1})), init.linear(name + ".scalar.out", d, d)};
            break;
    }
    return b;
}

void append(std::vector<Parameter*>& out, Linear& l) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
}

void require_kind(const Branch& b, FusionKind kind) {
    if (b.kind != kind) {
        throw std::invalid_argument("branch '" + b.name + "' uses " + std::string(to_string(b.kind)) +
                                    " fusion, not " + std::string(to_string(kind)));
    }
}

}  // namespace

std::vector<Parameter*> Branch::parameters() {
    std::vector<Parameter*> out;
    append(out, face);
    append(out, voice);
    if (auto* a = std::get_if<AttentionHead>(&head)) {
        append(out, a->scores);
        append(out, a->out);
    } else if (auto* c = std::get_if<ConvHead>(&head)) {
        for (Parameter* p : {&c->kernels, &c->gamma, &c->beta, &c->gate_kernels, &c->gate_bias}) {
            out.push_back(p);
        }
        append(out, c->compress);
    } else if (auto* s = std::get_if<ScalarHead>(&head)) {
        out.push_back(&s->logit);
        append(out, s->out);
    }
    return out;
}

std::vector<Parameter*> DualBranchModel::trainable_parameters(Stage stage) {
    std::vector<Parameter*> out;
    if (stage == Stage::stage1) {
        if (!frozen_branch.frozen) out = frozen_branch.parameters();
    } else {
        if (!update_branch.frozen) out = update_branch.parameters();
        append(out, combiner_hidden);
        append(out, combiner_out);
    }
    append(out, similarity_head);
    return out;
}

std::vector<std::pair<std::string, Array*>> DualBranchModel::named_arrays() {
    std::vector<std::pair<std::string, Array*>> out;
    auto add_branch = [&out](Branch& b) {
        for (Parameter* p : b.parameters()) out.emplace_back(p->name, &p->value);
        if (auto* c = std::get_if<ConvHead>(&b.head)) {
            out.emplace_back(b.name + ".conv.bn_running_mean", &c->stats.mean);
            out.emplace_back(b.name + ".conv.bn_running_var", &c->stats.var);
        }
    };
    add_branch(frozen_branch);
    add_branch(update_branch);
    for (Linear* l : {&combiner_hidden, &combiner_out, &similarity_head}) {
        out.emplace_back(l->weight.name, &l->weight.value);
        out.emplace_back(l->bias.name, &l->bias.value);
    }
    return out;
}

DualBranchModel init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init(seed);
    DualBranchModel m;
    m.config = config;
    m.seed = seed;
    const std::size_t d = config.embed_dim;
    // Draw order keeps stage-1 parameters independent of the update fusion kind.
    m.frozen_branch = make_branch("frozen", FusionKind::attention, config, init);
    m.similarity_head = init.linear("similarity_head", d, d);
    m.update_branch = make_branch("update", config.update_fusion, config, init);
    m.combiner_hidden = init.linear("combiner.hidden", 2 * d, d);
    m.combiner_out = init.linear("combiner.out", d, d);
    return m;
}

Projection project_features(Tape& tape, Var faces, Var voices, Branch& branch) {
    const auto& fs = faces.shape();
    const auto& vs = voices.shape();
    if (fs.size() != 2 || vs.size() != 2 || fs[0] != vs[0]) {
        throw std::invalid_argument("project_features: faces " + diff::to_string(fs) + " and voices " +
                                    diff::to_string(vs) + " must be [B x dim] with equal B");
    }
    if (fs[1] != branch.face.weight.value.dim(0) || vs[1] != branch.voice.weight.value.dim(0)) {
        throw std::invalid_argument("project_features: expected face dim " +
                                    std::to_string(branch.face.weight.value.dim(0)) + " and voice dim " +
                                    std::to_string(branch.voice.weight.value.dim(0)) + ", got " +
                                    std::to_string(fs[1]) + " and " + std::to_string(vs[1]));
    }
    return {branch.face.apply(tape, faces), branch.voice.apply(tape, voices)};
}

Var attention_fuse(Tape& tape, const Projection& p, Branch& branch) {
    require_kind(branch, FusionKind::attention);
    auto& head = std::get<AttentionHead>(branch.head);
    Var w = diff::softmax_rows(head.scores.apply(tape, diff::concat_cols(p.face, p.voice)));
    Var fused = diff::add(diff::mul_col(p.face, diff::slice_cols(w, 0, 1)),
                          diff::mul_col(p.voice, diff::slice_cols(w, 1, 1)));
    return head.out.apply(tape, fused);
}

Var conv_gate_fuse(Tape& tape, const Projection& p, Branch& branch, NormMode mode) {
    require_kind(branch, FusionKind::conv);
    auto& head = std::get<ConvHead>(branch.head);
    Var x = diff::concat_cols(p.face, p.voice);
    const std::size_t batch = x.shape()[0];
    const std::size_t length = x.shape()[1];
    const std::size_t pad = head.kernels.value.dim(2) / 2;

    Var seq = diff::reshape(x, {batch, 1, length});
    Var conv = diff::conv1d(seq, tape.parameter(head.kernels), tape.constant(Array({head.kernels.value.dim(0)})), 1,
                            pad);
    conv = diff::relu(
        diff::batchnorm1d(conv, tape.parameter(head.gamma), tape.parameter(head.beta), head.stats, mode));
    Var attention = diff::conv1d(conv, tape.parameter(head.gate_kernels), tape.parameter(head.gate_bias), 1,
                                 head.gate_kernels.value.dim(2) / 2);
    Var scores = diff::sigmoid(diff::mul(diff::channel_mean(conv), diff::reshape(attention, {batch, length})));
    return head.compress.apply(tape, diff::mul(scores, x));
}

Var scalar_fuse(Tape& tape, const Projection& p, Branch& branch) {
    require_kind(branch, FusionKind::scalar);
    auto& head = std::get<ScalarHead>(branch.head);
    Var w = diff::sigmoid(tape.parameter(head.logit));
    Var fused = diff::add(diff::scale_by(p.face, w), diff::scale_by(p.voice, diff::affine(w, -1.0, 1.0)));
    return head.out.apply(tape, fused);
}

Var fuse(Tape& tape, const Projection& p, Branch& branch, NormMode mode) {
    switch (branch.kind) {
        case FusionKind::attention: return attention_fuse(tape, p, branch);
        case FusionKind::conv: return conv_gate_fuse(tape, p, branch, mode);
        case FusionKind::scalar: return scalar_fuse(tape, p, branch);
    }
    throw std::logic_error("fuse: unhandled fusion kind");
}

Var blend(Var w, Var a, Var b) {
    return diff::add(diff::mul(w, a), diff::mul(diff::affine(w, -1.0, 1.0), b));
}

Combined combine_dual(Tape& tape, Var i_con, Var i_att, DualBranchModel& model) {
    if (i_con.shape() != i_att.shape()) {
        throw std::invalid_argument("combine_dual: shapes " + diff::to_string(i_con.shape()) + " and " +
                                    diff::to_string(i_att.shape()) + " differ");
    }
    Var hidden = diff::relu(model.combiner_hidden.apply(tape, diff::concat_cols(i_con, i_att)));
    Var w = diff::sigmoid(model.combiner_out.apply(tape, hidden));
    return {blend(w, i_con, i_att), w};
}

ForwardOutput forward_batch(Tape& tape, const Array& faces, const Array& voices, DualBranchModel& model,
                            Stage stage, NormMode mode) {
    ForwardOutput out;
    Var f = tape.constant(faces);
    Var v = tape.constant(voices);
    if (stage == Stage::stage1) {
        out.baseline = project_features(tape, f, v, model.frozen_branch);
        out.embedding = fuse(tape, out.baseline, model.frozen_branch, mode);
        return out;
    }
    if (model.completed_stage < 1) {
        throw std::invalid_argument("forward_batch: stage2 requested on a model never trained through stage1");
    }
    if (!model.config.dual) throw std::invalid_argument("forward_batch: stage2 requested on a single-branch model");

    Var i_att;
    {
        diff::NoGradScope no_grad(tape);
        out.baseline = project_features(tape, f, v, model.frozen_branch);
        i_att = fuse(tape, out.baseline, model.frozen_branch, NormMode::eval);
    }
    out.update = project_features(tape, f, v, model.update_branch);
    Var i_con = fuse(tape, out.update, model.update_branch, mode);
    Combined c = combine_dual(tape, i_con, i_att, model);
    out.embedding = c.embedding;
    out.weights = c.weights;
    return out;
}

void freeze_branch(DualBranchModel& model, BranchId id) {
    Branch& b = model.branch(id);
    if (!b.initialized()) throw std::invalid_argument("freeze_branch: branch '" + b.name + "' is not initialized");
    b.frozen = true;
    for (Parameter* p : b.parameters()) p->trainable = false;
}

ModalityEmbeddings trial_embeddings(const Array& faces, const Array& voices, DualBranchModel& model, Stage stage) {
    Tape tape;
    ForwardOutput out = forward_batch(tape, faces, voices, model, stage, NormMode::eval);
    if (stage == Stage::stage1) {
        return {diff::l2_normalize(out.baseline.face).value(), diff::l2_normalize(out.baseline.voice).value()};
    }
    Var face = blend(out.weights, out.update.face, out.baseline.face);
    Var voice = blend(out.weights, out.update.voice, out.baseline.voice);
    return {diff::l2_normalize(face).value(), diff::l2_normalize(voice).value()};
}

}  // namespace fvm::fop
