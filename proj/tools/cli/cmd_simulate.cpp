#include <fstream>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "cvsync/error.hpp"
#include "cvsync/harness/simulation.hpp"
#include "exit_codes.hpp"

namespace cvsync::cli {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text << '\n';
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

struct SimulateArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> chunk_size;
  std::string report;
  std::string trace;
  bool quiet = false;
};

struct ReplayArgs {
  std::vector<std::string> traces;
};

}  // namespace

Action register_simulate(CLI::App& app) {
  auto args = std::make_shared<SimulateArgs>();
  auto* sub = app.add_subcommand("simulate", "Run a scenario on the simulated network and report convergence");
  sub->add_option("scenario", args->scenario, "Scenario JSON file")->required();
  sub->add_option("--seed", args->seed, "Override the scenario seed");
  sub->add_option("--chunk-size", args->chunk_size, "Override the model chunk size in bytes");
  sub->add_option("--report", args->report, "Write the report JSON here instead of stdout");
  sub->add_option("--trace", args->trace, "Write every peer's applied log for `cvsync replay`");
  sub->add_flag("--quiet", args->quiet, "Print nothing; rely on the exit code");

  return [args]() {
    auto scenario = harness::load_scenario(args->scenario);
    if (args->seed) {
      scenario.seed = *args->seed;
      scenario.net.seed = *args->seed;
    }
    if (args->chunk_size) scenario.chunk_size = *args->chunk_size;
    const auto result = harness::run_scenario(scenario);
    const auto& r = result.report;
    const auto json = r.to_json();
    if (!args->report.empty()) {
      write_text(args->report, json);
    } else if (!args->quiet) {
      std::cout << json << '\n';
    }
    if (!args->trace.empty()) harness::write_trace(result.trace, args->trace);
    const bool ok = r.converged && r.replay_consistent && r.order_consistent;
    if (!args->quiet) {
      std::cerr << (ok ? "converged" : "DIVERGED") << ": peers=" << r.peers.size()
                << " max_divergence_rad=" << r.max_divergence_rad << " delta_payload_bytes=" << r.delta.payload_bytes
                << " stream_equivalent_bytes(analytic)=" << r.stream_equivalent_bytes
                << " ratio=" << r.delta_to_stream_ratio << '\n';
      for (const auto& p : r.problems) std::cerr << "  " << p << '\n';
    }
    return ok ? kOk : kDivergence;
  };
}

Action register_replay(CLI::App& app) {
  auto args = std::make_shared<ReplayArgs>();
  auto* sub = app.add_subcommand("replay", "Replay recorded applied-delta traces and compare final states");
  sub->add_option("traces", args->traces, "Trace JSON from `simulate --trace`, or one per `peer --trace`")->required();

  return [args]() {
    auto trace = harness::read_trace(args->traces.front());
    for (std::size_t i = 1; i < args->traces.size(); ++i) {
      auto more = harness::read_trace(args->traces[i]);
      for (auto& p : more.peers) trace.peers.push_back(std::move(p));
    }
    const auto out = harness::replay_trace(trace);
    std::cout << "peers=" << out.peers_checked << " entries=" << out.entries_replayed
              << " states_match=" << (out.states_match ? "yes" : "no")
              << " order_match=" << (out.order_match ? "yes" : "no") << '\n';
    for (const auto& p : out.problems) std::cout << "  " << p << '\n';
    return out.ok ? kOk : kDivergence;
  };
}

}  // namespace cvsync::cli
