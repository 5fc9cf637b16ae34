#include <chrono>
#include <ctime>
#include <fstream>

#include "msa/cli/cli.hpp"
#include "msa/error.hpp"

namespace msa {

void ExperimentConfig::validate() const
{
    network.validate();
    train.validate();
    generator.validate();
    if (image_size < 1) throw ConfigError("data.image_size must be >= 1");
    network.validate_input(network.input_channels, image_size, image_size);
}

nlohmann::json to_json(const ExperimentConfig& c)
{
    return {{"network", to_json(c.network)},
            {"train", to_json(c.train)},
            {"generator", to_json(c.generator)},
            {"data", {{"image_size", c.image_size}}}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    ExperimentConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        if (k == "network") c.network = network_config_from_json(v);
        else if (k == "train") c.train = train_config_from_json(v);
        else if (k == "generator") c.generator = generator_config_from_json(v);
        else if (k == "data") {
            if (!v.is_object()) throw ConfigError("data: expected an object");
            for (auto d = v.begin(); d != v.end(); ++d) {
                if (d.key() != "image_size") throw ConfigError("data." + d.key() + ": unknown field");
                if (!d.value().is_number_integer()) throw ConfigError("data.image_size: expected an integer");
                c.image_size = d.value().get<int>();
            }
        } else {
            throw ConfigError(k + ": unknown section (expected network, train, generator or data)");
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

std::filesystem::path make_run_dir(const std::filesystem::path& runs, const std::string& tag)
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string(stamp) + "-" + tag;
    std::filesystem::path dir = runs / base;
    for (int i = 2; std::filesystem::exists(dir); ++i) dir = runs / (base + "-" + std::to_string(i));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace msa
