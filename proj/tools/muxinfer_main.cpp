// muxinfer: train a multiplexed model zoo on planted-expertise data, learn
// the routing multiplexer, and evaluate deployment costs.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mux/config.hpp"
#include "mux/errors.hpp"
#include "mux/pipeline.hpp"

namespace {

// exit codes: 0 ok, 1 usage/internal, 2 config, 3 I/O, 4 numeric divergence
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "runs/default";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

mux::RunConfig resolve_config(const GlobalOpts& g) {
  mux::RunConfig cfg = g.config_path.empty() ? mux::default_config() : mux::load_config(g.config_path);
  if (g.seed_set) {
    cfg.seed = g.seed;
    cfg.planted.seed = g.seed;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"runtime deep-model multiplexing: joint contrastive training, learned routing, cost simulation"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--out", g.out_dir, "output directory for datasets, checkpoints and reports");
  app.add_option("--seed", g.seed, "root seed override")->each([&g](const std::string&) { g.seed_set = true; });

  CLI::App* gen = app.add_subcommand("gen-data", "generate the planted-expertise dataset");
  CLI::App* zoo = app.add_subcommand("train-zoo", "jointly train the model zoo with the contrastive loss");
  CLI::App* muxcmd = app.add_subcommand("train-mux", "train the multiplexer over the frozen zoo");
  CLI::App* eval = app.add_subcommand("evaluate", "score scenarios, export reports and embeddings");
  CLI::App* sim = app.add_subcommand("simulate", "replay the published cost tables");
  for (CLI::App* sub : {gen, zoo, muxcmd, eval, sim}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    const mux::RunConfig cfg = resolve_config(g);
    const mux::RunPaths paths{std::filesystem::path(g.out_dir)};
    if (gen->parsed()) mux::run_gen_data(cfg, paths);
    if (zoo->parsed()) mux::run_train_zoo(cfg, paths);
    if (muxcmd->parsed()) mux::run_train_mux(cfg, paths);
    if (eval->parsed()) mux::run_evaluate(cfg, paths);
    if (sim->parsed()) mux::run_simulate(cfg, paths);
    return kExitOk;
  } catch (const mux::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const mux::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const mux::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}
