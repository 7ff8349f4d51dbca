// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvm/data/pairs.hpp"
#include "fvm/data/records.hpp"
#include "fvm/data/synthetic.hpp"
#include "fvm/fop/model.hpp"
#include "fvm/run/config.hpp"
#include "fvm/score/scoring.hpp"

namespace fvm::run {

/// A pipeline stage failed. `validation` is true when the cause was bad input.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what, bool validation)
        : std::runtime_error("stage '" + stage + "' failed: " + what),
          stage_(std::move(stage)),
          validation_(validation) {}

    const std::string& stage() const noexcept { return stage_; }
    bool validation() const noexcept { return validation_; }

private:
    std::string stage_;
    bool validation_;
};

struct PreparedData {
    std::vector<data::FeatureRecord> train;  // after the train-language filter
    std::vector<data::FeatureRecord> test;
    std::vector<data::AttributePrediction> attributes;
    bool has_attributes = false;
    std::size_t face_dim = 0;
    std::size_t voice_dim = 0;
    std::filesystem::path features_path;  // where the records live on disk
};

/// Loads the feature file named in the config, or generates the synthetic set into
/// `out_dir/data`, then applies the unseen-identity split and the train-language filter.
PreparedData prepare_data(const RunConfig& config, const std::filesystem::path& out_dir);

/// Mean training loss per epoch.
using LossCurve = std::vector<double>;

/// Runs one stage over seeded shuffled batches of `pairs` with Adam on the stage's trainable
/// parameters. Marks the stage complete on the model.
LossCurve train_stage(fop::DualBranchModel& model, const std::vector<data::FeatureRecord>& records,
                      const std::vector<data::SamplePair>& pairs, fop::Stage stage, const TrainConfig& train,
                      const loss::LossConfig& loss);

struct TrainedModel {
    fop::DualBranchModel model;
    LossCurve stage1_loss;
    LossCurve stage2_loss;
    std::size_t train_pairs = 0;
    std::map<std::string, std::string> checkpoints;  // stage name -> path
};

/// Stage 1, freeze, stage 2 (when dual). Writes a checkpoint after every completed stage.
TrainedModel train_model(const RunConfig& config, const PreparedData& data, const std::filesystem::path& out_dir);

/// Stage whose embeddings a model scores with: stage 2 once completed, else stage 1.
fop::Stage scoring_stage(const fop::DualBranchModel& model);

/// Embeds every trial whose sample ids resolve in `records`; unresolved ids leave the
/// embedding empty so the scorer lists them in its error report.
std::vector<score::TrialEmbedding> embed_trials(fop::DualBranchModel& model, const std::vector<data::Trial>& trials,
                                                const std::vector<data::FeatureRecord>& records);

struct Evaluation {
    std::string name;  // test language, or "all"
    std::size_t trials = 0;
    double eer_raw = 0.0;
    std::optional<double> eer_adjusted;
    std::map<std::string, std::string> artifacts;
};

/// Scores trials, writes scores / DET / polarization outputs under `out_dir` with `name` as
/// file prefix, and computes raw and adjusted EER.
Evaluation evaluate(fop::DualBranchModel& model, const std::vector<data::Trial>& trials,
                    const std::vector<data::FeatureRecord>& records, const PreparedData& data,
                    const PolarizeConfig& polarize, const std::filesystem::path& out_dir, const std::string& name);

struct RunManifest {
    nlohmann::json config;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> checkpoints;
    LossCurve stage1_loss;
    LossCurve stage2_loss;
    std::vector<Evaluation> evaluations;
    double wall_clock_seconds = 0.0;
    std::string created;  // UTC timestamp
    std::map<std::string, std::string> artifacts;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Full pipeline into `config.output_dir`; writes manifest.json last.
RunManifest run_experiment(const RunConfig& config);
RunManifest load_manifest(const std::filesystem::path& path);

enum class Preset { fusion, thresh, augment, polarize };
Preset parse_preset(std::string_view name);
std::string_view to_string(Preset preset);

struct SweepRow {
    std::string config;
    std::string train_language;
    std::map<std::string, double> eer;  // test language -> EER
    double avg = 0.0;                   // mean of every cell of this config
};

/// Runs the preset grid with each language of the base synthetic set as training language and
/// every language as test set. Fusion/thresh/augment rows report raw EER, polarize rows adjusted
/// EER. Writes per-cell run directories and `<out_dir>/<preset>.csv`.
std::vector<SweepRow> ablation_sweep(Preset preset, const RunConfig& base, const std::filesystem::path& out_dir);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     const std::vector<std::string>& languages);

/// Human-readable summary of manifests, run directories and sweep directories. Unreadable
/// inputs are listed and skipped; returns the number skipped.
std::size_t report(const std::vector<std::filesystem::path>& inputs, std::ostream& out);

}  // namespace fvm::run
