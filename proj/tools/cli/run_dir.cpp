#include "run_dir.hpp"

#include <cstdlib>
#include <fstream>

#include "parasite/errors.hpp"

namespace parasite::cli {

std::filesystem::path output_root() {
  const char* env = std::getenv("PARASITE_RUN_DIR");
  if (env != nullptr && *env != '\0') return env;
  return "runs";
}

std::filesystem::path make_run_dir(const std::string& name) {
  if (name.empty()) throw InputError("run name must not be empty");
  const std::filesystem::path dir = output_root() / name;
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

ExperimentConfig load_config(const std::optional<std::string>& path) {
  if (!path) return desk_defaults();
  require_file(*path);
  return ExperimentConfig::load(*path, desk_defaults());
}

void record_run(const std::filesystem::path& dir, const ExperimentConfig& cfg, const std::string& verb,
                const std::vector<std::string>& argv, const nlohmann::json& details) {
  write_text(dir / "config.json", cfg.to_json() + "\n");
  nlohmann::json run = {{"verb", verb}, {"argv", argv}};
  for (const auto& [k, v] : details.items()) run[k] = v;
  write_json(dir / "run.json", run);
}

void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("no such file: " + path);
}

void require_dir(const std::string& path) {
  if (!std::filesystem::is_directory(path)) throw InputError("no such directory: " + path);
}

}  // namespace parasite::cli
