#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace msa {

enum class Preset { paper, desk, custom };

std::string to_string(Preset p);
Preset preset_from_string(const std::string& s);

/// Widths and switches of the segmentation network.
///
/// Encoder level l (0-based) has base_channels * 2^l channels. Every decoder
/// source is brought to decoder_channels, so a decoder level concatenates
/// depth * decoder_channels channels.
struct NetworkConfig {
    int depth = 5;
    int base_channels = 12;
    int decoder_channels = 24;
    int embedding_dim = 64;
    int se_reduction = 4;
    int input_channels = 1;
    Preset preset = Preset::paper;
    /// Context fusion on encoder skips; when off skips pass through unchanged.
    bool use_cafm = true;
    /// Dilated bottleneck with ASPP; when off a single conv block stands in.
    bool use_msd = true;

    /// About 7.57M parameters.
    static NetworkConfig paper();
    /// Small network for tests and desk-scale experiments.
    static NetworkConfig desk();

    std::vector<int> encoder_channels() const;
    int bottleneck_channels() const { return encoder_channels().back(); }
    /// Spatial downsampling between the input and the bottleneck.
    int reduction_factor() const { return 1 << (depth - 1); }

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// Throws ConfigError when an input of this size cannot be processed.
    void validate_input(int channels, int height, int width) const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

nlohmann::json to_json(const NetworkConfig& cfg);
/// Fields absent from `j` keep their value in `base`; unknown fields are rejected.
NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = NetworkConfig::paper());

/// Names of fields that differ between two configurations.
std::vector<std::string> config_differences(const NetworkConfig& a, const NetworkConfig& b);

}  // namespace msa
