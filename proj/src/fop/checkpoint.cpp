// SPDX-License-Identifier: Apache-2.0
#include "fvm/fop/checkpoint.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fvm::fop {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

std::string encode(const diff::Array& a) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(a.values().data());
    const std::size_t n = a.size() * sizeof(double);
    std::string out(sodium_base64_ENCODED_LEN(n, sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes, n, sodium_base64_VARIANT_ORIGINAL);
    out.resize(std::strlen(out.c_str()));
    return out;
}

std::vector<double> decode(const std::string& name, const std::string& text, std::size_t expected) {
    std::vector<double> values(expected);
    std::size_t written = 0;
    const char* end = nullptr;
    auto* out = reinterpret_cast<unsigned char*>(values.data());
    if (sodium_base642bin(out, expected * sizeof(double), text.data(), text.size(), nullptr, &written, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw CheckpointError("checkpoint: array '" + name + "' has malformed or oversized data");
    }
    if (written != expected * sizeof(double)) {
        throw CheckpointError("checkpoint: array '" + name + "' holds " + std::to_string(written) +
                              " bytes, expected " + std::to_string(expected * sizeof(double)));
    }
    return values;
}

json hyperparams(const ModelConfig& c) {
    return {{"face_dim", c.face_dim},         {"voice_dim", c.voice_dim},
            {"embed_dim", c.embed_dim},       {"conv_channels", c.conv_channels},
            {"conv_kernel", c.conv_kernel},   {"update_fusion", std::string(to_string(c.update_fusion))},
            {"dual", c.dual}};
}

ModelConfig parse_hyperparams(const json& j) {
    ModelConfig c;
    c.face_dim = j.at("face_dim").get<std::size_t>();
    c.voice_dim = j.at("voice_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::size_t>();
    c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    c.update_fusion = parse_fusion(j.at("update_fusion").get<std::string>());
    c.dual = j.at("dual").get<bool>();
    return c;
}

std::string stage_tag(int completed_stage) {
    switch (completed_stage) {
        case 0: return "init";
        case 1: return "stage1";
        case 2: return "stage2";
    }
    throw CheckpointError("checkpoint: invalid stage " + std::to_string(completed_stage));
}

int parse_stage(const std::string& tag) {
    if (tag == "init") return 0;
    if (tag == "stage1") return 1;
    if (tag == "stage2") return 2;
    throw CheckpointError("checkpoint: unknown stage tag '" + tag + "'");
}

}  // namespace

std::string serialize_checkpoint(DualBranchModel& model) {
    json arrays = json::object();
    for (auto& [name, array] : model.named_arrays()) {
        arrays[name] = {{"shape", array->shape()}, {"data", encode(*array)}};
    }
    json frozen = json::array();
    if (model.frozen_branch.frozen) frozen.push_back(model.frozen_branch.name);
    if (model.update_branch.frozen) frozen.push_back(model.update_branch.name);
    json doc = {{"version", kCheckpointVersion},
                {"hyperparams", hyperparams(model.config)},
                {"stage", stage_tag(model.completed_stage)},
                {"seed", model.seed},
                {"frozen", frozen},
                {"arrays", arrays}};
    return doc.dump(1) + "\n";
}

DualBranchModel deserialize_checkpoint(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: unreadable or truncated: ") + e.what());
    }
    try {
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        }
        ModelConfig config = parse_hyperparams(doc.at("hyperparams"));
        try {
            config.validate();
        } catch (const std::invalid_argument& e) {
            throw CheckpointError(std::string("checkpoint: bad hyperparameters: ") + e.what());
        }
        DualBranchModel model = init_model(config, doc.at("seed").get<std::uint64_t>());
        model.completed_stage = parse_stage(doc.at("stage").get<std::string>());

        const json& arrays = doc.at("arrays");
        auto expected = model.named_arrays();
        if (arrays.size() != expected.size()) {
            throw CheckpointError("checkpoint: holds " + std::to_string(arrays.size()) + " arrays, hyperparameters imply " +
                                  std::to_string(expected.size()));
        }
        for (auto& [name, array] : expected) {
            if (!arrays.contains(name)) throw CheckpointError("checkpoint: missing array '" + name + "'");
            const json& entry = arrays.at(name);
            const auto shape = entry.at("shape").get<diff::Shape>();
            if (shape != array->shape()) {
                throw CheckpointError("checkpoint: array '" + name + "' has shape " + diff::to_string(shape) +
                                      ", hyperparameters imply " + diff::to_string(array->shape()));
            }
            *array = diff::Array(shape, decode(name, entry.at("data").get<std::string>(), array->size()));
        }
        for (const auto& branch : doc.at("frozen")) {
            const auto name = branch.get<std::string>();
            if (name == model.frozen_branch.name) {
                freeze_branch(model, BranchId::frozen);
            } else if (name == model.update_branch.name) {
                freeze_branch(model, BranchId::update);
            } else {
                throw CheckpointError("checkpoint: unknown frozen branch '" + name + "'");
            }
        }
        return model;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed envelope: ") + e.what());
    }
}

void save_checkpoint(DualBranchModel& model, const std::filesystem::path& path) {
    const std::string text = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

DualBranchModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize_checkpoint(buffer.str());
}

}  // namespace fvm::fop
