// beliefnet command-line tool: fit, simulate, analyze, report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "beliefnet/pipeline.hpp"

namespace {

int fail(beliefnet::ErrorKind kind, const std::string& message) {
  const int code = beliefnet::is_io_error(kind) ? 2 : 1;
  beliefnet::ojson err = {{"error", {{"kind", beliefnet::to_string(kind)}, {"message", message}, {"exit_code", code}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-network estimation, energies, dynamics and analysis"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> temperature_mode, out, input, schema, model, topic, energy_basis;
  std::optional<double> prune_alpha, proposal_width;

  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--temperature-mode", temperature_mode, "scaling-mean or precision-diag-mean");
  app.add_option("--prune-alpha", prune_alpha, "Wald p-value threshold for pruning couplings");
  app.add_option("--proposal-width", proposal_width, "Width of the uniform belief proposal");
  app.add_option("--out", out, "Output directory");
  app.add_option("--input", input, "Panel CSV (long format)");
  app.add_option("--schema", schema, "Schema JSON");
  app.add_option("--model", model, "Fitted model JSON (default <out>/model.json)");
  app.add_option("--topic", topic, "Topic label");
  app.add_option("--energy-basis", energy_basis, "rescaled or residual");

  auto* fit = app.add_subcommand("fit", "Select and fit the belief network");
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel and chain trajectories");
  auto* analyze = app.add_subcommand("analyze", "Energies, dissonance, intervention effects and diagnostics");
  auto* report = app.add_subcommand("report", "simulate (if no input) + fit + analyze");
  for (auto* sub : {fit, simulate, analyze, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(beliefnet::ErrorKind::config, e.what());
  }

  try {
    beliefnet::RunConfig cfg;
    if (!config_path.empty()) cfg = beliefnet::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (temperature_mode) cfg.temperature_mode = beliefnet::parse_temperature_mode(*temperature_mode);
    if (prune_alpha) cfg.prune_alpha = *prune_alpha;
    if (proposal_width) cfg.proposal_width = *proposal_width;
    if (out) cfg.out = *out;
    if (input) cfg.input = *input;
    if (schema) cfg.schema = *schema;
    if (model) cfg.model = *model;
    if (topic) cfg.topic = *topic;
    if (energy_basis) {
      if (*energy_basis != "rescaled" && *energy_basis != "residual")
        throw beliefnet::Error(beliefnet::ErrorKind::config, "--energy-basis must be 'rescaled' or 'residual'");
      cfg.energy_basis = *energy_basis == "rescaled" ? beliefnet::EnergyBasis::rescaled : beliefnet::EnergyBasis::residual;
    }
    if (!(cfg.prune_alpha > 0.0 && cfg.prune_alpha < 1.0))
      throw beliefnet::Error(beliefnet::ErrorKind::config, "--prune-alpha must lie in (0, 1)");
    if (!(cfg.proposal_width > 0.0 && cfg.proposal_width <= 2.0))
      throw beliefnet::Error(beliefnet::ErrorKind::config, "--proposal-width must lie in (0, 2]");

    std::vector<std::filesystem::path> written;
    if (fit->parsed()) written = beliefnet::cmd_fit(cfg);
    else if (simulate->parsed()) written = beliefnet::cmd_simulate(cfg);
    else if (analyze->parsed()) written = beliefnet::cmd_analyze(cfg);
    else written = beliefnet::cmd_report(cfg);
    for (const auto& p : written) std::cout << p.string() << "\n";
    return 0;
  } catch (const beliefnet::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(beliefnet::ErrorKind::io, e.what());
  } catch (const std::exception& e) {
    return fail(beliefnet::ErrorKind::degenerate, e.what());
  }
}
