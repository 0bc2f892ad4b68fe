// Command-line entry point for the two-stage phase recognition pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "must/config.hpp"
#include "must/error.hpp"
#include "must/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale transformer phase recognition: generate, train, extract, infer, evaluate"};
  app.require_subcommand(1, 1);
  app.fallthrough();  // global flags may follow the command name

  std::string workdir = ".";
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out, video, svg;

  app.add_option("--workdir", workdir, "Root that every configured path is relative to");
  app.add_option("--config", config_file, "Flat key = value configuration file");
  app.add_option("--set", overrides, "Override one config key (key=value); repeatable");
  app.add_option("--seed", seed, "Shorthand for --set seed=N");
  app.add_option("--mode", mode, "offline or online (shorthand for --set mode=...)");
  app.add_option("--out", out, "Output directory for this command");
  app.add_option("--video", video, "Video to draw (ribbon)");
  app.add_option("--svg", svg, "SVG output path (ribbon)");

  bool print_config = false;
  auto* show = app.add_subcommand("config", "Print the merged configuration and exit");
  show->callback([&] { print_config = true; });
  for (const auto& name : must::command_names()) app.add_subcommand(name, "Run the " + name + " stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  must::RunConfig cfg;
  try {
    if (!config_file.empty()) {
      const std::filesystem::path p = std::filesystem::path(config_file).is_absolute()
                                          ? std::filesystem::path(config_file)
                                          : std::filesystem::path(workdir) / config_file;
      cfg = must::RunConfig::from_file(std::filesystem::exists(p) ? p : std::filesystem::path(config_file));
    }
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (mode) cfg.set("mode", *mode);
    cfg.validate();
  } catch (const must::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const must::IoError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  if (print_config) {
    std::cout << cfg.serialize();
    return 0;
  }

  must::CommandOptions options;
  options.workdir = workdir;
  if (out) options.out = *out;
  if (video) options.video = *video;
  if (svg) options.svg = *svg;
  const std::string command = app.get_subcommands().front()->get_name();
  return must::execute_command(command, cfg, options, std::cout, std::cerr);
}
