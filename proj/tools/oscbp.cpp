// Command-line front end: one subcommand per pipeline stage.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "oscbp/cli_io.hpp"
#include "oscbp/error.hpp"

namespace {

using oscbp::io::CommandOptions;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string target = "both";
  std::optional<std::string> variant;
  std::optional<std::string> input;
};

CommandOptions resolve(const Flags& f) {
  CommandOptions o;
  if (!f.config.empty()) o.config = oscbp::io::load_run_config(f.config);
  if (f.seed) o.config.apply_seed(*f.seed);
  if (f.variant) {
    o.config.model = oscbp::model::with_variant(o.config.model, oscbp::model::parse_variant(*f.variant));
  }
  oscbp::io::validate(o.config);
  o.out = f.out;
  o.target = oscbp::io::parse_target_selection(f.target);
  if (f.input) o.input = *f.input;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oscillometric blood pressure estimation pipeline"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "RunConfig file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Master seed, overrides the config");
  app.add_option("--out", flags.out, "Output directory")->capture_default_str();
  app.add_option("--target", flags.target, "Targets to train")
      ->check(CLI::IsMember({"sbp", "dbp", "both"}))
      ->capture_default_str();
  app.add_option("--variant", flags.variant, "Model variant")
      ->check(CLI::IsMember({"cnn", "cnn_lstm1", "cnn_lstm2"}));
  app.add_option("--input", flags.input, "Override the stage's input file or directory");

  using Command = void (*)(const CommandOptions&, std::ostream&);
  const std::pair<const char*, Command> commands[] = {
      {"simulate", oscbp::io::cmd_simulate},   {"preprocess", oscbp::io::cmd_preprocess},
      {"represent", oscbp::io::cmd_represent}, {"train", oscbp::io::cmd_train},
      {"evaluate", oscbp::io::cmd_evaluate},   {"report", oscbp::io::cmd_report},
  };
  const char* help[] = {"Generate a synthetic cohort and truth table",
                        "Filter, segment and QC every record",
                        "Build morpho-temporal grids",
                        "LOSO training, checkpoints and prediction table",
                        "Error statistics, BHS/AAMI and Bland-Altman tables",
                        "Print the human-readable summary"};
  Command chosen = nullptr;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->fallthrough();
    sub->callback([&chosen, cmd = commands[i].second] { chosen = cmd; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    chosen(resolve(flags), std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
