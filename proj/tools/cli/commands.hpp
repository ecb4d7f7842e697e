#pragma once

#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace parasite::cli {

struct Command {
  CLI::App* app = nullptr;
  std::function<void()> run;
};

struct Registry {
  std::vector<Command> commands;
  std::vector<std::string> argv;
};

void add_stego_commands(CLI::App& app, Registry& reg);
void add_data_commands(CLI::App& app, Registry& reg);
void add_model_commands(CLI::App& app, Registry& reg);
void add_eval_commands(CLI::App& app, Registry& reg);

}  // namespace parasite::cli
