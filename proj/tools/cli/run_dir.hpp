#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "parasite/experiment.hpp"

namespace parasite::cli {

// Output root: $PARASITE_RUN_DIR when set, else ./runs.
std::filesystem::path output_root();

// <root>/<name>, created on demand.
std::filesystem::path make_run_dir(const std::string& name);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

// desk_defaults() overlaid with the optional config file.
ExperimentConfig load_config(const std::optional<std::string>& path);

// Writes config.json (loadable with --config) and run.json (verb, argv and
// verb-specific details) into the run directory.
void record_run(const std::filesystem::path& dir, const ExperimentConfig& cfg, const std::string& verb,
                const std::vector<std::string>& argv, const nlohmann::json& details = nlohmann::json::object());

void require_file(const std::string& path);
void require_dir(const std::string& path);

}  // namespace parasite::cli
