#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <string>

#include "prognos/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 validation failure, 3 numerical failure,
// 4 missing artifact.
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitMissingArtifact = 4;

struct CliState {
  std::string config_path;
  prognos::pipeline::CliOverrides overrides;
};

void add_common_options(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_path, "Run configuration file")->required();
  auto* seed = cmd->add_option("--seed", "Master seed override");
  seed->each([&state](const std::string& v) {
    state.overrides.seed = std::stoull(v);
  });
  auto* endpoint = cmd->add_option("--endpoint", "Endpoint override (OS/DFI/DRFI/RFS/DRFS)");
  endpoint->each([&state](const std::string& v) { state.overrides.endpoint = v; });
  auto* subgroup = cmd->add_option("--subgroup", "Subgroup filter expression");
  subgroup->each([&state](const std::string& v) { state.overrides.subgroup = v; });
  auto* out = cmd->add_option("--out", "Output directory override");
  out->each([&state](const std::string& v) { state.overrides.out = v; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prognos: survival modeling pipeline over embedding bags and clinical data"};
  app.require_subcommand(1);

  CliState state;
  std::map<std::string, std::function<void(const prognos::pipeline::RunConfig&)>> commands = {
      {"synth", prognos::pipeline::cmd_synth},
      {"tile", prognos::pipeline::cmd_tile},
      {"train-pathology", prognos::pipeline::cmd_train_pathology},
      {"train-clinical", prognos::pipeline::cmd_train_clinical},
      {"build-ensemble", prognos::pipeline::cmd_build_ensemble},
      {"evaluate", prognos::pipeline::cmd_evaluate},
      {"pool", prognos::pipeline::cmd_pool},
      {"stratify", prognos::pipeline::cmd_stratify},
      {"report", prognos::pipeline::cmd_report},
  };

  static const std::map<std::string, std::string> descriptions = {
      {"synth", "Generate reproducible synthetic cohorts and embeddings"},
      {"tile", "Segment rasters and emit patch manifests"},
      {"train-pathology", "Cross-validated search over pathology models"},
      {"train-clinical", "Cross-validated search over clinical models"},
      {"build-ensemble", "Fuse modality ensembles and fix the risk cutoff"},
      {"evaluate", "Score held-out cohorts and compute survival metrics"},
      {"pool", "Random-effects pooling of per-dataset metrics"},
      {"stratify", "Apply the risk cutoff to evaluated scores"},
      {"report", "Forest tables, plots, and curve data"},
  };

  for (const auto& [name, fn] : commands) {
    CLI::App* cmd = app.add_subcommand(name, descriptions.at(name));
    add_common_options(cmd, state);
    cmd->callback([&state, fn = fn]() {
      prognos::pipeline::RunConfig config =
          prognos::pipeline::RunConfig::load(state.config_path, state.overrides);
      fn(config);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  } catch (const prognos::MissingArtifactError& e) {
    std::fprintf(stderr, "error (missing artifact): %s\n", e.what());
    return kExitMissingArtifact;
  } catch (const prognos::NumericalError& e) {
    std::fprintf(stderr, "error (numerical): %s\n", e.what());
    return kExitNumerical;
  } catch (const prognos::ValidationError& e) {
    std::fprintf(stderr, "error (validation): %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return 0;
}
