#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/architecture/config.hpp"
#include "msa/data/dataset.hpp"
#include "msa/training/trainer.hpp"

namespace msa {

/// Everything a config file can set. Sections are optional; see docs/config.md.
struct ExperimentConfig {
    NetworkConfig network = NetworkConfig::paper();
    TrainConfig train;
    GeneratorConfig generator;
    /// Resolution samples are resized to when loaded from disk.
    int image_size = 256;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Unknown sections or fields raise ConfigError naming them.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFailure = 2 };

/// Runs the msa command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// runs/<YYYYmmdd-HHMMSS>-<tag>, with a numeric suffix when that exists already.
std::filesystem::path make_run_dir(const std::filesystem::path& runs, const std::string& tag);

}  // namespace msa
