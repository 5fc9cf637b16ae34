#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/architecture/network.hpp"

namespace msa {

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

/// In-memory image of a checkpoint file. Layout is described in docs/checkpoint.md.
struct Checkpoint {
    NetworkConfig network;
    /// Free-form run metadata (epoch, validation Dice, training config).
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;
};

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'A', 'C', 'K', 'P', 'T', '1'};

Checkpoint snapshot(Network<float>& net, nlohmann::json meta = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies tensors into `net`. Throws ConfigError listing the differing
/// configuration fields when the checkpoint was built for another network.
void restore(Network<float>& net, const Checkpoint& ckpt);

}  // namespace msa
