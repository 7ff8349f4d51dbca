// SPDX-License-Identifier: Apache-2.0
#include "fvm/run/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>

#include "fvm/data/csv.hpp"
#include "fvm/diff/adam.hpp"
#include "fvm/fop/checkpoint.hpp"
#include "fvm/loss/pair_loss.hpp"
#include "fvm/score/polarize.hpp"

namespace fvm::run {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class F>
auto in_stage(const std::string& name, F&& body) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw StageError(name, e.what(), true);
    } catch (const std::exception& e) {
        throw StageError(name, e.what(), false);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::unordered_map<std::string, std::size_t> index_by_id(const std::vector<data::FeatureRecord>& records) {
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) out.emplace(records[i].sample_id, i);
    return out;
}

void copy_row(diff::Array& dst, std::size_t row, const std::vector<double>& src) {
    std::copy(src.begin(), src.end(), dst.data().begin() + static_cast<std::ptrdiff_t>(row * src.size()));
}

}  // namespace

PreparedData prepare_data(const RunConfig& config, const fs::path& out_dir) {
    PreparedData out;
    std::vector<data::FeatureRecord> records;
    std::vector<std::string> test_ids;
    if (config.data.features.empty()) {
        auto generated = data::gen_synthetic(config.synthetic);
        const auto files = data::write_synthetic(generated, config.synthetic, out_dir / "data", false);
        records = std::move(generated.records);
        test_ids = std::move(generated.test_identities);
        out.attributes = std::move(generated.attributes);
        out.has_attributes = true;
        out.face_dim = config.synthetic.face_dim;
        out.voice_dim = config.synthetic.voice_dim;
    } else {
        auto set = data::load_features(config.data.features);
        records = std::move(set.records);
        out.face_dim = set.face_dim;
        out.voice_dim = set.voice_dim;
        out.features_path = config.data.features;
        test_ids = data::load_test_identities(config.data.split);
        if (!config.data.attributes.empty()) {
            out.attributes = data::load_attributes(config.data.attributes);
            out.has_attributes = true;
        }
    }
    if (out.face_dim == 0 || out.voice_dim == 0) {
        throw std::invalid_argument("dataset needs both face and voice records");
    }
    auto [train, test] = data::split_unseen(records, test_ids);
    if (!config.data.train_language.empty()) {
        train = data::filter_language(train, config.data.train_language);
        if (train.empty()) {
            throw std::invalid_argument("no training records in language '" + config.data.train_language + "'");
        }
    }
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
}

LossCurve train_stage(fop::DualBranchModel& model, const std::vector<data::FeatureRecord>& records,
                      const std::vector<data::SamplePair>& pairs, fop::Stage stage, const TrainConfig& train,
                      const loss::LossConfig& loss_config) {
    std::map<std::string, std::size_t> label_of;
    for (const auto& id : data::identities(records)) label_of.emplace(id, label_of.size());
    const std::size_t fd = model.config.face_dim;
    const std::size_t vd = model.config.voice_dim;

    diff::Adam adam(model.trainable_parameters(stage), {train.learning_rate});
    const std::uint64_t stage_key = stage == fop::Stage::stage1 ? 0 : (std::uint64_t{1} << 32);
    const std::size_t epochs = stage == fop::Stage::stage1 ? train.stage1_epochs : train.stage2_epochs;
    LossCurve curve;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double total = 0.0;
        const auto batches = data::make_batches(pairs.size(), train.batch_size, train.seed, stage_key + epoch);
        for (const auto& batch : batches) {
            diff::Array faces({batch.size(), fd});
            diff::Array voices({batch.size(), vd});
            std::vector<std::size_t> ids(batch.size());
            for (std::size_t r = 0; r < batch.size(); ++r) {
                const auto& p = pairs[batch[r]];
                copy_row(faces, r, records[p.face].vector);
                copy_row(voices, r, records[p.voice].vector);
                ids[r] = label_of.at(records[p.face].identity);
            }
            adam.zero_grad();
            diff::Tape tape;
            auto out = fop::forward_batch(tape, faces, voices, model, stage, diff::NormMode::train);
            auto result = loss::total_loss(out.embedding, ids, tape.parameter(model.similarity_head.weight),
                                           tape.parameter(model.similarity_head.bias), loss_config);
            const double value = result.loss.value().item();
            if (!std::isfinite(value)) throw std::runtime_error("training loss became non-finite");
            tape.backward(result.loss);
            adam.step();
            total += value;
        }
        curve.push_back(total / static_cast<double>(batches.size()));
    }
    model.completed_stage = std::max(model.completed_stage, stage == fop::Stage::stage1 ? 1 : 2);
    return curve;
}

TrainedModel train_model(const RunConfig& config, const PreparedData& data, const fs::path& out_dir) {
    fop::ModelConfig mc = config.model;
    mc.face_dim = data.face_dim;
    mc.voice_dim = data.voice_dim;
    TrainedModel out{fop::init_model(mc, config.train.seed), {}, {}, 0, {}};

    const auto originals = data::index_pairs(data.train);
    const auto pairs = data::augment_pairs(originals, data.train, config.train.augment_multiplier, config.train.seed);
    if (pairs.size() < 2) throw std::invalid_argument("fewer than 2 training pairs");
    out.train_pairs = pairs.size();
    fs::create_directories(out_dir);

    if (config.train.stage1_epochs > 0) {
        out.stage1_loss = train_stage(out.model, data.train, pairs, fop::Stage::stage1, config.train, config.loss);
        const auto path = out_dir / "stage1.ckpt";
        fop::save_checkpoint(out.model, path);
        out.checkpoints["stage1"] = path.string();
    }
    if (mc.dual && out.model.completed_stage >= 1 && config.train.stage2_epochs > 0) {
        fop::freeze_branch(out.model, fop::BranchId::frozen);
        out.stage2_loss = train_stage(out.model, data.train, pairs, fop::Stage::stage2, config.train, config.loss);
        const auto path = out_dir / "stage2.ckpt";
        fop::save_checkpoint(out.model, path);
        out.checkpoints["stage2"] = path.string();
    }
    return out;
}

fop::Stage scoring_stage(const fop::DualBranchModel& model) {
    return model.completed_stage >= 2 ? fop::Stage::stage2 : fop::Stage::stage1;
}

std::vector<score::TrialEmbedding> embed_trials(fop::DualBranchModel& model, const std::vector<data::Trial>& trials,
                                                const std::vector<data::FeatureRecord>& records) {
    const auto by_id = index_by_id(records);
    const auto stage = scoring_stage(model);
    std::vector<score::TrialEmbedding> out;
    std::vector<std::size_t> resolved;
    for (const auto& t : trials) {
        out.push_back({t, {}, {}});
        const auto f = by_id.find(t.face_id);
        const auto v = by_id.find(t.voice_id);
        if (f != by_id.end() && v != by_id.end() && records[f->second].modality == data::Modality::face &&
            records[v->second].modality == data::Modality::voice) {
            resolved.push_back(out.size() - 1);
        }
    }
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < resolved.size(); start += chunk) {
        const std::size_t n = std::min(chunk, resolved.size() - start);
        diff::Array faces({n, model.config.face_dim});
        diff::Array voices({n, model.config.voice_dim});
        for (std::size_t r = 0; r < n; ++r) {
            const auto& t = trials[resolved[start + r]];
            const auto& fv = records[by_id.at(t.face_id)].vector;
            const auto& vv = records[by_id.at(t.voice_id)].vector;
            if (fv.size() != model.config.face_dim || vv.size() != model.config.voice_dim) {
                throw std::invalid_argument("trial '" + t.trial_id + "': feature dimensions do not match the model");
            }
            copy_row(faces, r, fv);
            copy_row(voices, r, vv);
        }
        const auto emb = fop::trial_embeddings(faces, voices, model, stage);
        for (std::size_t r = 0; r < n; ++r) {
            auto& e = out[resolved[start + r]];
            e.face = diff::row(emb.faces, r);
            e.voice = diff::row(emb.voices, r);
        }
    }
    return out;
}

Evaluation evaluate(fop::DualBranchModel& model, const std::vector<data::Trial>& trials,
                    const std::vector<data::FeatureRecord>& records, const PreparedData& data,
                    const PolarizeConfig& polarize, const fs::path& out_dir, const std::string& name) {
    Evaluation ev;
    ev.name = name;
    auto scored = score::trial_scores(embed_trials(model, trials, records));
    if (!scored.errors.empty()) {
        std::string report;
        for (const auto& e : scored.errors) report += e + '\n';
        const auto path = out_dir / (name + "_errors.txt");
        write_text(path, report);
        ev.artifacts["errors"] = path.string();
        spdlog::warn("{} trials could not be scored; see {}", scored.errors.size(), path.string());
    }
    ev.trials = scored.scores.size();
    const auto scores_path = out_dir / (name + "_scores.csv");
    score::write_scores(scores_path, scored.scores);
    ev.artifacts["scores"] = scores_path.string();

    const auto raw = score::compute_eer(scored.scores);
    ev.eer_raw = raw.eer;
    const auto det_path = out_dir / (name + "_det.csv");
    score::write_det(det_path, raw.det);
    ev.artifacts["det"] = det_path.string();

    if (polarize.enabled && data.has_attributes) {
        const auto result = score::polarize_scores(scored.scores, data.attributes, polarize.confidence);
        const score::PolarizeFiles files{out_dir / (name + "_scores_adjusted.csv"),
                                         out_dir / (name + "_polarized.csv"), out_dir / (name + "_audit.jsonl")};
        score::write_polarize_outputs(result, files);
        ev.artifacts["scores_adjusted"] = files.adjusted.string();
        ev.artifacts["polarized"] = files.polarized.string();
        ev.artifacts["audit"] = files.audit.string();
        ev.eer_adjusted = score::compute_eer(result.scores, score::ScoreField::adjusted).eer;
    }
    return ev;
}

json RunManifest::to_json() const {
    json evals = json::array();
    for (const auto& e : evaluations) {
        evals.push_back({{"name", e.name},
                         {"trials", e.trials},
                         {"eer_raw", e.eer_raw},
                         {"eer_adjusted", e.eer_adjusted ? json(*e.eer_adjusted) : json(nullptr)},
                         {"artifacts", e.artifacts}});
    }
    return {{"config", config},
            {"config_hash", config_hash},
            {"seed", seed},
            {"checkpoints", checkpoints},
            {"metrics", {{"stage1_loss", stage1_loss}, {"stage2_loss", stage2_loss}, {"evaluations", evals}}},
            {"wall_clock_seconds", wall_clock_seconds},
            {"created", created},
            {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const json& j) {
    RunManifest m;
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    const auto& metrics = j.at("metrics");
    m.stage1_loss = metrics.at("stage1_loss").get<LossCurve>();
    m.stage2_loss = metrics.at("stage2_loss").get<LossCurve>();
    for (const auto& e : metrics.at("evaluations")) {
        Evaluation ev;
        ev.name = e.at("name").get<std::string>();
        ev.trials = e.at("trials").get<std::size_t>();
        ev.eer_raw = e.at("eer_raw").get<double>();
        if (!e.at("eer_adjusted").is_null()) ev.eer_adjusted = e.at("eer_adjusted").get<double>();
        ev.artifacts = e.at("artifacts").get<std::map<std::string, std::string>>();
        m.evaluations.push_back(std::move(ev));
    }
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.created = j.at("created").get<std::string>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    return m;
}

RunManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read manifest " + path.string());
    try {
        return RunManifest::from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

RunManifest run_experiment(const RunConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    in_stage("config", [&] {
        config.validate();
        return 0;
    });
    const fs::path out_dir = config.output_dir;
    RunManifest manifest;
    manifest.config = to_json(config);
    manifest.config_hash = config_hash(config);
    manifest.seed = config.train.seed;
    in_stage("config", [&] {
        fs::create_directories(out_dir);
        write_text(out_dir / "config.json", manifest.config.dump(2) + "\n");
        return 0;
    });
    manifest.artifacts["config"] = (out_dir / "config.json").string();

    const auto data = in_stage("data", [&] { return prepare_data(config, out_dir); });
    if (config.data.features.empty()) {
        manifest.artifacts["split"] = (out_dir / "data" / "split.json").string();
        manifest.artifacts["attributes"] = (out_dir / "data" / "attributes.jsonl").string();
    } else if (!config.data.attributes.empty()) {
        manifest.artifacts["attributes"] = config.data.attributes;
    }

    auto trained = in_stage("train", [&] { return train_model(config, data, out_dir); });
    manifest.checkpoints = trained.checkpoints;
    manifest.stage1_loss = trained.stage1_loss;
    manifest.stage2_loss = trained.stage2_loss;

    const auto trials = in_stage("trials", [&] {
        if (!config.data.trials.empty()) return data::load_trials(config.data.trials);
        auto made = data::make_trials(data.test, config.train.seed);
        data::write_trials(out_dir / "trials.csv", made);
        return made;
    });
    manifest.artifacts["trials"] = config.data.trials.empty() ? (out_dir / "trials.csv").string() : config.data.trials;

    in_stage("evaluate", [&] {
        if (config.data.test_languages.empty()) {
            manifest.evaluations.push_back(
                evaluate(trained.model, trials, data.test, data, config.polarize, out_dir, "all"));
            return 0;
        }
        const auto by_id = index_by_id(data.test);
        for (const auto& language : config.data.test_languages) {
            std::vector<data::Trial> subset;
            for (const auto& t : trials) {
                const auto f = by_id.find(t.face_id);
                if (f != by_id.end() && data.test[f->second].language == language) subset.push_back(t);
            }
            if (subset.empty()) throw std::invalid_argument("no test trials in language '" + language + "'");
            manifest.evaluations.push_back(
                evaluate(trained.model, subset, data.test, data, config.polarize, out_dir, language));
        }
        return 0;
    });

    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.created = utc_now();
    in_stage("manifest", [&] {
        write_text(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
        return 0;
    });
    return manifest;
}

Preset parse_preset(std::string_view name) {
    if (name == "fusion" || name == "dual-fusion") return Preset::fusion;
    if (name == "thresh") return Preset::thresh;
    if (name == "augment") return Preset::augment;
    if (name == "polarize") return Preset::polarize;
    throw std::invalid_argument("unknown sweep preset '" + std::string(name) +
                                "' (expected fusion, thresh, augment or polarize)");
}

std::string_view to_string(Preset preset) {
    switch (preset) {
        case Preset::fusion: return "fusion";
        case Preset::thresh: return "thresh";
        case Preset::augment: return "augment";
        case Preset::polarize: return "polarize";
    }
    return "?";
}

namespace {

struct GridValue {
    std::string label;
    std::function<void(RunConfig&)> apply;
};

std::vector<GridValue> grid(Preset preset) {
    switch (preset) {
        case Preset::fusion:
            return {{"W", [](RunConfig& c) { c.model.update_fusion = fop::FusionKind::scalar; }},
                    {"Att", [](RunConfig& c) { c.model.update_fusion = fop::FusionKind::attention; }},
                    {"Conv", [](RunConfig& c) { c.model.update_fusion = fop::FusionKind::conv; }},
                    {"NoDual", [](RunConfig& c) { c.model.dual = false; }}};
        case Preset::thresh: {
            std::vector<GridValue> out;
            for (double t : {0.4, 0.6, 0.8}) {
                out.push_back({data::format_double(t), [t](RunConfig& c) {
                                   c.loss.theta = t;
                                   c.loss.pair_weighting = true;
                               }});
            }
            out.push_back({"none", [](RunConfig& c) { c.loss.pair_weighting = false; }});
            return out;
        }
        case Preset::augment: {
            std::vector<GridValue> out;
            for (std::size_t m : {1, 2, 4, 6}) {
                out.push_back({std::to_string(m) + "x", [m](RunConfig& c) { c.train.augment_multiplier = m; }});
            }
            return out;
        }
        case Preset::polarize: break;
    }
    return {};
}

std::vector<std::string> dataset_languages(const RunConfig& base) {
    if (base.data.features.empty()) {
        std::vector<std::string> out;
        for (std::size_t k = 0; k < base.synthetic.n_languages; ++k) out.push_back(data::language_tag(k));
        return out;
    }
    std::set<std::string> langs;
    for (const auto& r : data::load_features(base.data.features).records) langs.insert(r.language);
    return {langs.begin(), langs.end()};
}

void fill_averages(std::vector<SweepRow>& rows) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& r : rows) {
        for (const auto& [lang, eer] : r.eer) {
            sums[r.config].first += eer;
            sums[r.config].second += 1;
        }
    }
    for (auto& r : rows) r.avg = sums[r.config].first / static_cast<double>(sums[r.config].second);
}

}  // namespace

std::vector<SweepRow> ablation_sweep(Preset preset, const RunConfig& base, const fs::path& out_dir) {
    base.validate();
    const auto languages = dataset_languages(base);
    if (languages.empty()) throw std::invalid_argument("sweep: dataset has no languages");
    const fs::path dir = out_dir / std::string(to_string(preset));
    fs::create_directories(dir);

    // Generate the synthetic set once; every cell reads the same files.
    RunConfig shared = base;
    if (shared.data.features.empty()) {
        const auto data = data::gen_synthetic(base.synthetic);
        const auto files = data::write_synthetic(data, base.synthetic, out_dir / "data");
        shared.data.features = files.features.string();
        shared.data.split = files.split.string();
        shared.data.attributes = files.attributes.string();
    }
    shared.data.test_languages = languages;

    std::vector<SweepRow> rows;
    if (preset != Preset::polarize) {
        for (const auto& value : grid(preset)) {
            for (const auto& train_language : languages) {
                RunConfig cell = shared;
                value.apply(cell);
                cell.data.train_language = train_language;
                cell.output_dir = (dir / (value.label + "_train_" + train_language)).string();
                spdlog::info("sweep {}: {} train={}", to_string(preset), value.label, train_language);
                const auto m = run_experiment(cell);
                SweepRow row{value.label, train_language, {}, 0.0};
                for (const auto& e : m.evaluations) row.eer[e.name] = e.eer_raw;
                rows.push_back(std::move(row));
            }
        }
    } else {
        if (shared.data.attributes.empty()) throw std::invalid_argument("sweep: polarize preset needs attributes");
        const auto attributes = data::load_attributes(shared.data.attributes);
        std::vector<std::pair<std::string, RunManifest>> runs;
        for (const auto& train_language : languages) {
            RunConfig cell = shared;
            cell.data.train_language = train_language;
            cell.polarize.enabled = false;
            cell.output_dir = (dir / ("train_" + train_language)).string();
            spdlog::info("sweep polarize: train={}", train_language);
            runs.emplace_back(train_language, run_experiment(cell));
        }
        for (double alpha : {1.0, 1.1, 1.2, 1.3}) {
            score::ConfidenceConfig cc = base.polarize.confidence;
            cc.alpha_pol = alpha;
            const std::string label = alpha == 1.0 ? "1.0" : data::format_double(alpha);
            for (const auto& [train_language, m] : runs) {
                SweepRow row{label, train_language, {}, 0.0};
                const fs::path cell_dir = dir / ("alpha_" + label + "_train_" + train_language);
                fs::create_directories(cell_dir);
                for (const auto& e : m.evaluations) {
                    const auto result = score::polarize_scores(score::load_scores(e.artifacts.at("scores")),
                                                               attributes, cc);
                    score::write_polarize_outputs(result, {cell_dir / (e.name + "_scores_adjusted.csv"),
                                                           cell_dir / (e.name + "_polarized.csv"),
                                                           cell_dir / (e.name + "_audit.jsonl")});
                    row.eer[e.name] = score::compute_eer(result.scores, score::ScoreField::adjusted).eer;
                }
                rows.push_back(std::move(row));
            }
        }
    }
    fill_averages(rows);
    write_sweep_csv(out_dir / (std::string(to_string(preset)) + ".csv"), rows, languages);
    return rows;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows,
                     const std::vector<std::string>& languages) {
    std::string text = "config,train_language";
    for (const auto& l : languages) text += "," + l;
    text += ",avg\n";
    for (const auto& r : rows) {
        text += r.config + "," + r.train_language;
        for (const auto& l : languages) {
            const auto it = r.eer.find(l);
            text += "," + (it == r.eer.end() ? std::string() : data::format_double(it->second));
        }
        text += "," + data::format_double(r.avg) + "\n";
    }
    write_text(path, text);
}

namespace {

void print_manifest(const fs::path& where, const RunManifest& m, std::ostream& out) {
    out << "run " << where.string() << "\n";
    out << "  config hash " << m.config_hash << "  seed " << m.seed << "  wall clock "
        << data::format_double(std::round(m.wall_clock_seconds * 10.0) / 10.0) << " s\n";
    for (const auto& e : m.evaluations) {
        out << "  EER " << e.name << " (" << e.trials << " trials): raw " << data::format_double(e.eer_raw);
        if (e.eer_adjusted) out << "  adjusted " << data::format_double(*e.eer_adjusted);
        out << "\n";
    }
    out << "  loss curve\n  epoch,stage1,stage2\n";
    const std::size_t n = std::max(m.stage1_loss.size(), m.stage2_loss.size());
    for (std::size_t i = 0; i < n; ++i) {
        out << "  " << i + 1 << ',' << (i < m.stage1_loss.size() ? data::format_double(m.stage1_loss[i]) : "")
            << ',' << (i < m.stage2_loss.size() ? data::format_double(m.stage2_loss[i]) : "") << "\n";
    }
}

void print_sweep(const fs::path& csv, std::ostream& out) {
    const auto table = data::read_csv(csv);
    out << "sweep " << csv.stem().string() << " (" << csv.string() << ")\n";
    std::vector<std::size_t> width(table.header.size(), 0);
    for (std::size_t c = 0; c < table.header.size(); ++c) width[c] = table.header[c].size();
    auto cell = [&](const std::string& s, std::size_t c) {
        if (c < 2) return s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", data::parse_double(s, "EER"));
        return std::string(buf);
    };
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], cell(row[c], c).size());
    }
    auto line = [&](const std::vector<std::string>& row, bool header) {
        out << " ";
        for (std::size_t c = 0; c < row.size(); ++c) {
            const std::string s = header ? row[c] : cell(row[c], c);
            out << ' ' << s << std::string(width[c] - s.size() + 1, ' ');
        }
        out << "\n";
    };
    line(table.header, true);
    for (const auto& row : table.rows) line(row, false);
}

}  // namespace

std::size_t report(const std::vector<fs::path>& inputs, std::ostream& out) {
    std::size_t skipped = 0;
    std::vector<std::pair<fs::path, RunManifest>> manifests;
    for (const auto& input : inputs) {
        try {
            if (fs::is_directory(input)) {
                bool found = false;
                if (fs::exists(input / "manifest.json")) {
                    manifests.emplace_back(input, load_manifest(input / "manifest.json"));
                    found = true;
                }
                for (const char* preset : {"fusion", "thresh", "augment", "polarize"}) {
                    const auto csv = input / (std::string(preset) + ".csv");
                    if (fs::exists(csv)) {
                        print_sweep(csv, out);
                        found = true;
                    }
                }
                if (!found) throw std::invalid_argument("no manifest.json or sweep CSV in " + input.string());
            } else {
                manifests.emplace_back(input.parent_path(), load_manifest(input));
            }
        } catch (const std::exception& e) {
            out << "skipped " << input.string() << ": " << e.what() << "\n";
            ++skipped;
        }
    }
    for (const auto& [where, m] : manifests) print_manifest(where, m, out);
    if (manifests.size() >= 2) {
        out << "comparison (raw / adjusted EER)\n";
        for (const auto& [where, m] : manifests) {
            out << "  " << where.string();
            for (const auto& e : m.evaluations) {
                out << "  " << e.name << " " << data::format_double(e.eer_raw) << " / "
                    << (e.eer_adjusted ? data::format_double(*e.eer_adjusted) : std::string("-"));
            }
            out << "\n";
        }
    }
    return skipped;
}

}  // namespace fvm::run
