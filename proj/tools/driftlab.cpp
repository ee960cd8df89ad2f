#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "driftlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"driftlab: singular-drift diffusion experiments"};
  app.set_version_flag("--version", std::string("driftlab ") + DRIFTLAB_VERSION);
  std::string config_file;
  std::vector<std::string> tokens;
  app.add_option("--config", config_file, "key=value config file (may set command=...)");
  app.add_option("args", tokens, "command followed by key=value overrides");
  std::string names;
  for (auto n : driftlab::cli::command_names()) names += "\n  " + std::string(n);
  app.footer("Commands:" + names);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::vector<std::string> all;
  if (!config_file.empty()) {
    try {
      all = driftlab::cli::Config::read_file(config_file);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    // A bare command name must lead; keep it in front of the file's keys.
    if (!tokens.empty() && tokens.front().find('=') == std::string::npos) {
      all.insert(all.begin(), tokens.front());
      tokens.erase(tokens.begin());
    }
  }
  all.insert(all.end(), tokens.begin(), tokens.end());
  return driftlab::cli::run_tokens(all, std::cout, std::cerr);
}
