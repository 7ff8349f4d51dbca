// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "fvm/fop/model.hpp"

namespace fvm::fop {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON envelope: {version, hyperparams, stage, seed, frozen, arrays: name -> {shape, data}}
/// where data is base64 of little-endian float64.
std::string serialize_checkpoint(DualBranchModel& model);
DualBranchModel deserialize_checkpoint(const std::string& text);

void save_checkpoint(DualBranchModel& model, const std::filesystem::path& path);
/// Throws CheckpointError on version or shape mismatch, missing or extra arrays, and
/// unreadable or truncated input. No partially loaded model is ever returned.
DualBranchModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fvm::fop
