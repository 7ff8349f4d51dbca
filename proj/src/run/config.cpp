// SPDX-License-Identifier: Apache-2.0
#include "fvm/run/config.hpp"

#include <sodium.h>

#include <fstream>
#include <set>
#include <stdexcept>

namespace fvm::run {

using nlohmann::json;

void RunConfig::validate(bool check_paths) const {
    if (data.features.empty()) {
        synthetic.validate();
    } else if (data.split.empty()) {
        throw std::invalid_argument("config: data.split is required when data.features is set");
    }
    if (check_paths) {
        for (const auto* p : {&data.features, &data.split, &data.trials, &data.attributes}) {
            if (!p->empty() && !std::filesystem::exists(*p)) {
                throw std::invalid_argument("config: path does not exist: " + *p);
            }
        }
    }
    fop::ModelConfig m = model;
    m.face_dim = m.voice_dim = 1;  // taken from the data later
    m.validate();
    loss.validate();
    if (train.batch_size < 2) throw std::invalid_argument("config: train.batch_size must be at least 2");
    if (!(train.learning_rate > 0.0)) throw std::invalid_argument("config: train.learning_rate must be positive");
    if (train.augment_multiplier == 0) throw std::invalid_argument("config: train.augment_multiplier must be >= 1");
    if (model.dual && train.stage1_epochs == 0 && train.stage2_epochs > 0) {
        throw std::invalid_argument("config: stage 2 needs a trained baseline (stage1_epochs > 0)");
    }
    polarize.confidence.validate();
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
}

json to_json(const RunConfig& c) {
    const auto& s = c.synthetic;
    const auto& cc = c.polarize.confidence;
    return {
        {"data",
         {{"features", c.data.features},
          {"split", c.data.split},
          {"trials", c.data.trials},
          {"attributes", c.data.attributes},
          {"train_language", c.data.train_language},
          {"test_languages", c.data.test_languages}}},
        {"synthetic",
         {{"n_train_identities", s.n_train_identities},
          {"n_test_identities", s.n_test_identities},
          {"scenes_per_identity", s.scenes_per_identity},
          {"samples_per_scene", s.samples_per_scene},
          {"face_dim", s.face_dim},
          {"voice_dim", s.voice_dim},
          {"latent_dim", s.latent_dim},
          {"scene_noise", s.scene_noise},
          {"sample_noise", s.sample_noise},
          {"n_languages", s.n_languages},
          {"language_offset", s.language_offset},
          {"seed", s.seed}}},
        {"model",
         {{"embed_dim", c.model.embed_dim},
          {"conv_channels", c.model.conv_channels},
          {"conv_kernel", c.model.conv_kernel},
          {"fusion", fop::to_string(c.model.update_fusion)},
          {"dual", c.model.dual}}},
        {"loss",
         {{"alpha", c.loss.alpha},
          {"beta", c.loss.beta},
          {"theta", c.loss.theta},
          {"pair_weighting", c.loss.pair_weighting},
          {"activation", loss::to_string(c.loss.activation)}}},
        {"train",
         {{"stage1_epochs", c.train.stage1_epochs},
          {"stage2_epochs", c.train.stage2_epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"augment_multiplier", c.train.augment_multiplier},
          {"seed", c.train.seed}}},
        {"polarize",
         {{"enabled", c.polarize.enabled},
          {"w_a", cc.w_a},
          {"w_g", cc.w_g},
          {"threshold", cc.threshold},
          {"alpha_pol", cc.alpha_pol}}},
        {"output_dir", c.output_dir},
    };
}

namespace {

// Reads known keys of one JSON object and rejects the rest.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw std::invalid_argument("config: " + where_ + " must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config: " + where_ + "." + key + " has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw std::invalid_argument("config: unknown key " + where_ + "." + key);
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
    RunConfig c;
    Section root(j, "<root>");
    if (const json* d = root.child("data")) {
        Section s(*d, "data");
        s.read("features", c.data.features);
        s.read("split", c.data.split);
        s.read("trials", c.data.trials);
        s.read("attributes", c.data.attributes);
        s.read("train_language", c.data.train_language);
        s.read("test_languages", c.data.test_languages);
        s.finish();
    }
    if (const json* d = root.child("synthetic")) {
        Section s(*d, "synthetic");
        auto& y = c.synthetic;
        s.read("n_train_identities", y.n_train_identities);
        s.read("n_test_identities", y.n_test_identities);
        s.read("scenes_per_identity", y.scenes_per_identity);
        s.read("samples_per_scene", y.samples_per_scene);
        s.read("face_dim", y.face_dim);
        s.read("voice_dim", y.voice_dim);
        s.read("latent_dim", y.latent_dim);
        s.read("scene_noise", y.scene_noise);
        s.read("sample_noise", y.sample_noise);
        s.read("n_languages", y.n_languages);
        s.read("language_offset", y.language_offset);
        s.read("seed", y.seed);
        s.finish();
    }
    if (const json* d = root.child("model")) {
        Section s(*d, "model");
        s.read("embed_dim", c.model.embed_dim);
        s.read("conv_channels", c.model.conv_channels);
        s.read("conv_kernel", c.model.conv_kernel);
        std::string fusion(fop::to_string(c.model.update_fusion));
        s.read("fusion", fusion);
        c.model.update_fusion = fop::parse_fusion(fusion);
        s.read("dual", c.model.dual);
        s.finish();
    }
    if (const json* d = root.child("loss")) {
        Section s(*d, "loss");
        s.read("alpha", c.loss.alpha);
        s.read("beta", c.loss.beta);
        s.read("theta", c.loss.theta);
        s.read("pair_weighting", c.loss.pair_weighting);
        std::string act(loss::to_string(c.loss.activation));
        s.read("activation", act);
        c.loss.activation = loss::parse_head_activation(act);
        s.finish();
    }
    if (const json* d = root.child("train")) {
        Section s(*d, "train");
        s.read("stage1_epochs", c.train.stage1_epochs);
        s.read("stage2_epochs", c.train.stage2_epochs);
        s.read("batch_size", c.train.batch_size);
        s.read("learning_rate", c.train.learning_rate);
        s.read("augment_multiplier", c.train.augment_multiplier);
        s.read("seed", c.train.seed);
        s.finish();
    }
    if (const json* d = root.child("polarize")) {
        Section s(*d, "polarize");
        auto& cc = c.polarize.confidence;
        s.read("enabled", c.polarize.enabled);
        s.read("w_a", cc.w_a);
        s.read("w_g", cc.w_g);
        s.read("threshold", cc.threshold);
        s.read("alpha_pol", cc.alpha_pol);
        s.finish();
    }
    root.read("output_dir", c.output_dir);
    root.finish();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const RunConfig& config) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium failed to initialize");
    const std::string text = to_json(config).dump();
    unsigned char digest[crypto_generichash_BYTES];
    crypto_generichash(digest, sizeof(digest), reinterpret_cast<const unsigned char*>(text.data()), text.size(),
                       nullptr, 0);
    char hex[2 * crypto_generichash_BYTES + 1];
    sodium_bin2hex(hex, sizeof(hex), digest, sizeof(digest));
    return hex;
}

}  // namespace fvm::run
