#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace driftlab::cli {

enum class Command {
  certify,
  operator_check,
  evolve,
  resolvent_check,
  feller,
  simulate,
  martingale,
  slope,
  collapse,
  phase_diagram,
  weighted_estimates,
};

/// Hyphenated command name, as typed on the command line.
std::string_view to_string(Command c);
/// Throws ConfigError for an unknown name.
Command parse_command(std::string_view name);
std::vector<std::string_view> command_names();

/// Flat key=value configuration. Every command has a fixed key set with
/// defaults; unknown keys are rejected. Values are kept as typed so the
/// header re-emits them verbatim.
class Config {
 public:
  /// Tokens are "key=value"; the command is either a bare first token or a
  /// "command=" entry. Later tokens override earlier ones.
  static Config parse(const std::vector<std::string>& tokens);

  /// key=value lines of a config file; blank lines and '#' comments skipped.
  static std::vector<std::string> read_file(const std::string& path);

  Command command() const noexcept { return command_; }
  /// Every key of the command in schema order, defaults filled in.
  const std::vector<std::pair<std::string, std::string>>& resolved() const noexcept { return values_; }

  const std::string& text(std::string_view key) const;
  double real(std::string_view key) const;
  int integer(std::string_view key) const;
  long long count(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::vector<double> reals(std::string_view key) const;
  std::vector<int> integers(std::string_view key) const;

  /// "# driftlab <version>" then "# key=value" for the command and each resolved key.
  std::string header() const;

 private:
  Command command_ = Command::certify;
  std::vector<std::pair<std::string, std::string>> values_;
};

struct RunResult {
  bool pass = true;  // false: an asserted property failed
  std::string csv;   // column header plus rows, without the config header
};

/// Runs the configured experiment. Module errors propagate.
RunResult run(const Config& config);

/// Full entry point: parse, run, write header + CSV to the configured output
/// ("-" is `out`). Returns 0 on pass, 1 on assertion failure or a runtime
/// error, 2 on a configuration error. Diagnostics go to `err`.
int run_tokens(const std::vector<std::string>& tokens, std::ostream& out, std::ostream& err);

}  // namespace driftlab::cli
