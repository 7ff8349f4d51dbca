// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: data generation, training, scoring and sweeps.
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "fvm/data/pairs.hpp"
#include "fvm/data/synthetic.hpp"
#include "fvm/fop/checkpoint.hpp"
#include "fvm/run/config.hpp"
#include "fvm/run/pipeline.hpp"
#include "fvm/score/polarize.hpp"
#include "fvm/score/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fvm;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

run::RunConfig base_config(const Globals& g) {
    run::RunConfig c = g.config.empty() ? run::RunConfig{} : run::load_config(g.config);
    if (g.seed) {
        c.train.seed = *g.seed;
        c.synthetic.seed = *g.seed;
    }
    if (!g.out.empty()) c.output_dir = g.out;
    return c;
}

fs::path need_out(const Globals& g) {
    if (g.out.empty()) throw std::invalid_argument("--out is required for this command");
    fs::create_directories(g.out);
    return g.out;
}

void write_embeddings(const fs::path& path, const std::vector<score::TrialEmbedding>& rows) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : rows) {
        json j = {{"trial_id", r.trial.trial_id},
                  {"face_sample_id", r.trial.face_id},
                  {"voice_sample_id", r.trial.voice_id},
                  {"label", r.trial.same ? json(*r.trial.same ? "same" : "different") : json("unknown")}};
        if (!r.face.empty()) j["face"] = r.face;
        if (!r.voice.empty()) j["voice"] = r.voice;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<score::TrialEmbedding> load_embeddings(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read embeddings " + path.string());
    std::vector<score::TrialEmbedding> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            score::TrialEmbedding r;
            r.trial.trial_id = j.at("trial_id").get<std::string>();
            r.trial.face_id = j.at("face_sample_id").get<std::string>();
            r.trial.voice_id = j.at("voice_sample_id").get<std::string>();
            const auto label = j.at("label").get<std::string>();
            if (label == "same") r.trial.same = true;
            if (label == "different") r.trial.same = false;
            if (j.contains("face")) r.face = j.at("face").get<std::vector<double>>();
            if (j.contains("voice")) r.voice = j.at("voice").get<std::vector<double>>();
            rows.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

void print_eer(const std::string& what, double eer) {
    std::printf("%s EER %.6f\n", what.c_str(), eer);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face-voice cross-modal verification: training, scoring and ablation sweeps"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "RunConfig JSON file");
    app.add_option("--seed", g.seed, "Seed for data generation and training");
    app.add_option("--out", g.out, "Output directory");

    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic feature set, attributes and split");

    auto* augment = app.add_subcommand("augment", "Write original and augmented training pairs");
    std::string features;
    std::size_t multiplier = 4;
    augment->add_option("--features", features, "Feature JSONL")->required();
    augment->add_option("--multiplier", multiplier, "Total pairs as a multiple of the originals");

    auto* train = app.add_subcommand("train", "Run both training stages and write checkpoints");

    auto* embed = app.add_subcommand("embed", "Embed trials with a checkpoint");
    std::string checkpoint, trials_path;
    embed->add_option("--checkpoint", checkpoint)->required();
    embed->add_option("--features", features)->required();
    embed->add_option("--trials", trials_path)->required();

    auto* score_cmd = app.add_subcommand("score", "Euclidean trial scores from embeddings");
    std::string embeddings;
    score_cmd->add_option("--embeddings", embeddings)->required();

    auto* eer = app.add_subcommand("eer", "EER and DET curve of a score file");
    std::string scores;
    eer->add_option("--scores", scores)->required();

    auto* polarize = app.add_subcommand("polarize", "Confidence polarization of a score file");
    std::string attributes;
    polarize->add_option("--scores", scores)->required();
    polarize->add_option("--attributes", attributes)->required();

    auto* run_cmd = app.add_subcommand("run", "Full pipeline with manifest");

    auto* sweep = app.add_subcommand("sweep", "Ablation grid");
    std::string preset;
    sweep->add_option("--preset", preset, "fusion, thresh, augment or polarize")->required();

    auto* report = app.add_subcommand("report", "Summarize manifests, run directories and sweep directories");
    std::vector<std::string> inputs;
    report->add_option("inputs", inputs)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            const auto cfg = base_config(g);
            const auto out = need_out(g);
            const auto data = data::gen_synthetic(cfg.synthetic);
            data::write_synthetic(data, cfg.synthetic, out);
            const auto s = data::summarize(data.records);
            std::printf("%zu identities, %zu face and %zu voice records, %zu original pairs\n", s.identities,
                        s.face_records, s.voice_records, s.original_pairs);
        } else if (augment->parsed()) {
            const auto cfg = base_config(g);
            const auto out = need_out(g);
            const auto set = data::load_features(features);
            const auto originals = data::index_pairs(set.records);
            const auto pairs = data::augment_pairs(originals, set.records, multiplier, cfg.train.seed);
            data::write_pairs(out / "pairs.csv", pairs, set.records);
            std::printf("%zu original, %zu total pairs\n", originals.size(), pairs.size());
        } else if (train->parsed()) {
            const auto cfg = base_config(g);
            cfg.validate();
            const fs::path out = cfg.output_dir;
            const auto data = run::prepare_data(cfg, out);
            const auto trained = run::train_model(cfg, data, out);
            for (const auto& [stage, path] : trained.checkpoints) std::printf("%s %s\n", stage.c_str(), path.c_str());
        } else if (embed->parsed()) {
            const auto out = need_out(g);
            auto model = fop::load_checkpoint(checkpoint);
            const auto set = data::load_features(features);
            const auto rows = run::embed_trials(model, data::load_trials(trials_path), set.records);
            write_embeddings(out / "embeddings.jsonl", rows);
            std::printf("%zu trials embedded\n", rows.size());
        } else if (score_cmd->parsed()) {
            const auto out = need_out(g);
            const auto scored = score::trial_scores(load_embeddings(embeddings));
            score::write_scores(out / "scores.csv", scored.scores);
            for (const auto& e : scored.errors) std::fprintf(stderr, "%s\n", e.c_str());
            std::printf("%zu trials scored, %zu rejected\n", scored.scores.size(), scored.errors.size());
        } else if (eer->parsed()) {
            const auto loaded = score::load_scores(scores);
            const auto r = score::compute_eer(loaded);
            print_eer("raw", r.eer);
            std::printf("threshold %.6f\n", r.threshold);
            if (!g.out.empty()) score::write_det(need_out(g) / "det.csv", r.det);
        } else if (polarize->parsed()) {
            const auto cfg = base_config(g);
            const auto out = need_out(g);
            const auto r = score::polarize_file(
                scores, attributes, cfg.polarize.confidence,
                {out / "scores_adjusted.csv", out / "polarized.csv", out / "audit.jsonl"});
            std::size_t flagged = 0;
            for (const auto& a : r.audit) flagged += a.flagged ? 1 : 0;
            std::printf("%zu trials, %zu flagged\n", r.scores.size(), flagged);
            try {
                print_eer("raw", score::compute_eer(r.scores, score::ScoreField::raw).eer);
                print_eer("adjusted", score::compute_eer(r.scores, score::ScoreField::adjusted).eer);
            } catch (const std::invalid_argument&) {
                std::printf("labels incomplete, EER not computed\n");
            }
        } else if (run_cmd->parsed()) {
            const auto m = run::run_experiment(base_config(g));
            for (const auto& e : m.evaluations) {
                print_eer(e.name + " raw", e.eer_raw);
                if (e.eer_adjusted) print_eer(e.name + " adjusted", *e.eer_adjusted);
            }
            std::printf("manifest %s\n", (fs::path(base_config(g).output_dir) / "manifest.json").c_str());
        } else if (sweep->parsed()) {
            const auto cfg = base_config(g);
            const fs::path out = g.out.empty() ? fs::path(cfg.output_dir) : fs::path(g.out);
            const auto p = run::parse_preset(preset);
            run::ablation_sweep(p, cfg, out);
            run::report({out}, std::cout);
        } else if (report->parsed()) {
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            run::report(paths, std::cout);
        }
    } catch (const run::StageError& e) {
        spdlog::error("{}", e.what());
        return e.validation() ? 1 : 2;
    } catch (const fop::CheckpointError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
