#pragma once

#include <string>
#include <vector>

namespace toxbuster {

/// Exit codes of the command suite.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand (gen, aggregate, vocab, train, eval, ablate, transfer,
/// calibrate, serve, kpi). argv[0] is the program name.
int run_cli(const std::vector<std::string> &argv);
int run_cli(int argc, char **argv);

} // namespace toxbuster
