#include <iostream>
#include <map>

#include "commands.hpp"
#include "exit_codes.hpp"

int main(int argc, char** argv) {
  using namespace cvsync::cli;
  CLI::App app{"cvsync: collaborative heart-model sync engine"};
  app.require_subcommand(1);

  std::map<CLI::App*, Action> actions;
  auto add = [&](Action (*reg)(CLI::App&)) {
    const auto before = app.get_subcommands({}).size();
    auto action = reg(app);
    actions[app.get_subcommands({})[before]] = std::move(action);
  };
  add(register_relay);
  add(register_peer);
  add(register_simulate);
  add(register_slice);
  add(register_replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kIo;
  }

  for (auto& [sub, action] : actions) {
    if (!sub->parsed()) continue;
    try {
      return action();
    } catch (const cvsync::Error& e) {
      std::cerr << "cvsync " << sub->get_name() << ": " << cvsync::to_string(e.code()) << ": " << e.what() << '\n';
      return exit_code_for(e.code());
    } catch (const std::exception& e) {
      std::cerr << "cvsync " << sub->get_name() << ": " << e.what() << '\n';
      return kIo;
    }
  }
  return kIo;
}
