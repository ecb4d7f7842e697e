#include <iostream>

#include "commands.hpp"
#include "parasite/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steganographic backdoor experiments on a desk-scale diffusion model", "parasite"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "parasite 0.1.0");

  parasite::cli::Registry reg;
  reg.argv.assign(argv, argv + argc);
  parasite::cli::add_stego_commands(app, reg);
  parasite::cli::add_data_commands(app, reg);
  parasite::cli::add_model_commands(app, reg);
  parasite::cli::add_eval_commands(app, reg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    for (const auto& cmd : reg.commands) {
      if (cmd.app->parsed()) cmd.run();
    }
  } catch (const parasite::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}
