#pragma once

#include <CLI11.hpp>
#include <functional>

namespace cvsync::cli {

// Each register_* adds a subcommand and returns the action to run when it was chosen.
using Action = std::function<int()>;

Action register_simulate(CLI::App& app);
Action register_replay(CLI::App& app);
Action register_slice(CLI::App& app);
Action register_relay(CLI::App& app);
Action register_peer(CLI::App& app);

}  // namespace cvsync::cli
