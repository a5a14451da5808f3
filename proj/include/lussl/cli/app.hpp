#pragma once

#include <CLI11.hpp>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lussl/cli/commands.hpp"
#include "lussl/cli/config.hpp"

namespace lussl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

using Command = std::function<int(const RunConfig&, const RunDir&, Console)>;

inline const std::map<std::string, std::pair<Command, const char*>>& command_table() {
  static const std::map<std::string, std::pair<Command, const char*>> table{
      {"synth", {cmd_synth, "Generate a synthetic dataset (manifest + PNGs)"}},
      {"pretrain", {cmd_pretrain, "Self-supervised pretraining of extractor + projector"}},
      {"train", {cmd_train, "Supervised training under LC, FT or NC"}},
      {"eval", {cmd_eval, "Evaluation report from trained checkpoints or a fixture"}},
      {"sweep", {cmd_sweep, "Label-efficiency sweep, pretrained vs scratch"}},
      {"bench", {cmd_bench, "Inference latency and FLOPs, serial vs shared backbone"}},
      {"infer", {cmd_infer, "Hierarchical tree inference over a dataset"}},
  };
  return table;
}

/// Parses arguments and runs one command. Returns 0 on success, 1 on a
/// runtime failure and 2 on a usage or configuration error.
inline int run_cli(int argc, const char* const* argv, Console con = {}) {
  CLI::App app{"Lung-ultrasound self-supervised learning toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : command_table()) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", overrides, "Override a config value: key.path=value (repeatable)");
    sub->add_option("--run-dir", run_dir, "Write outputs here instead of a timestamped directory");
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    con.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    con.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    con.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    json root = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        root = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
      }
      rebase_paths(root, fs::path(config_path).parent_path());
    }
    for (const auto& o : overrides) apply_override(root, o);
    const RunConfig cfg = parse_config(root);
    const auto dir = open_run_dir(cfg, command, run_dir.empty() ? std::nullopt : std::optional<fs::path>(run_dir));
    con.err << "run directory: " << dir.root.string() << "\n";
    return command_table().at(command).first(cfg, dir, con);
  } catch (const ConfigError& e) {
    con.err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    con.err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace lussl::cli
