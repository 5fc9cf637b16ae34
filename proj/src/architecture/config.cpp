#include "msa/architecture/config.hpp"

#include "msa/error.hpp"

namespace msa {

std::string to_string(Preset p)
{
    switch (p) {
    case Preset::paper: return "paper";
    case Preset::desk: return "desk";
    case Preset::custom: return "custom";
    }
    return "custom";
}

Preset preset_from_string(const std::string& s)
{
    if (s == "paper") return Preset::paper;
    if (s == "desk") return Preset::desk;
    if (s == "custom") return Preset::custom;
    throw ConfigError("network.preset: unknown preset '" + s + "'");
}

NetworkConfig NetworkConfig::paper()
{
    return {};
}

NetworkConfig NetworkConfig::desk()
{
    NetworkConfig c;
    c.depth = 4;
    c.base_channels = 8;
    c.decoder_channels = 8;
    c.embedding_dim = 32;
    c.se_reduction = 4;
    c.preset = Preset::desk;
    return c;
}

std::vector<int> NetworkConfig::encoder_channels() const
{
    std::vector<int> out;
    for (int l = 0; l < depth; ++l) out.push_back(base_channels << l);
    return out;
}

void NetworkConfig::validate() const
{
    if (depth < 3 || depth > 8) throw ConfigError("network.depth must be in [3, 8], got " + std::to_string(depth));
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string("network.") + name + " must be >= 1, got " + std::to_string(v));
    };
    positive(base_channels, "base_channels");
    positive(decoder_channels, "decoder_channels");
    positive(embedding_dim, "embedding_dim");
    positive(se_reduction, "se_reduction");
    positive(input_channels, "input_channels");
    for (int c : encoder_channels())
        if ((3 * c) % se_reduction != 0)
            throw ConfigError("network.se_reduction " + std::to_string(se_reduction) +
                              " does not divide encoder concat width " + std::to_string(3 * c));
    if (use_cafm && (4 * decoder_channels) % se_reduction != 0)
        throw ConfigError("network.se_reduction " + std::to_string(se_reduction) +
                          " does not divide fusion concat width " + std::to_string(4 * decoder_channels));
}

void NetworkConfig::validate_input(int channels, int height, int width) const
{
    if (channels != input_channels)
        throw ConfigError("input has " + std::to_string(channels) + " channels, network expects " +
                          std::to_string(input_channels));
    const int f = reduction_factor();
    if (height < f || width < f || height % f != 0 || width % f != 0)
        throw ConfigError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not a positive multiple of " + std::to_string(f) + " (2^(depth-1))");
}

nlohmann::json to_json(const NetworkConfig& cfg)
{
    return {{"depth", cfg.depth},
            {"base_channels", cfg.base_channels},
            {"decoder_channels", cfg.decoder_channels},
            {"embedding_dim", cfg.embedding_dim},
            {"se_reduction", cfg.se_reduction},
            {"input_channels", cfg.input_channels},
            {"preset", to_string(cfg.preset)},
            {"use_cafm", cfg.use_cafm},
            {"use_msd", cfg.use_msd}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base)
{
    if (!j.is_object()) throw ConfigError("network: expected an object");
    NetworkConfig cfg = base;
    if (j.contains("preset")) {
        if (!j["preset"].is_string()) throw ConfigError("network.preset: expected a string");
        const Preset p = preset_from_string(j["preset"].get<std::string>());
        if (p == Preset::paper) cfg = NetworkConfig::paper();
        if (p == Preset::desk) cfg = NetworkConfig::desk();
        cfg.preset = p;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const auto& v = it.value();
        auto as_int = [&](int& dst) {
            if (!v.is_number_integer()) throw ConfigError("network." + key + ": expected an integer");
            dst = v.get<int>();
        };
        auto as_bool = [&](bool& dst) {
            if (!v.is_boolean()) throw ConfigError("network." + key + ": expected a boolean");
            dst = v.get<bool>();
        };
        if (key == "preset") continue;
        if (key == "depth") as_int(cfg.depth);
        else if (key == "base_channels") as_int(cfg.base_channels);
        else if (key == "decoder_channels") as_int(cfg.decoder_channels);
        else if (key == "embedding_dim") as_int(cfg.embedding_dim);
        else if (key == "se_reduction") as_int(cfg.se_reduction);
        else if (key == "input_channels") as_int(cfg.input_channels);
        else if (key == "use_cafm") as_bool(cfg.use_cafm);
        else if (key == "use_msd") as_bool(cfg.use_msd);
        else throw ConfigError("network." + key + ": unknown field");
    }
    cfg.validate();
    return cfg;
}

std::vector<std::string> config_differences(const NetworkConfig& a, const NetworkConfig& b)
{
    std::vector<std::string> out;
    const auto ja = to_json(a);
    const auto jb = to_json(b);
    for (auto it = ja.begin(); it != ja.end(); ++it)
        if (jb.at(it.key()) != it.value()) out.push_back(it.key());
    return out;
}

}  // namespace msa
