#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/costsim.hpp"
#include "mux/dataset.hpp"
#include "mux/model.hpp"

namespace mux {

struct TrainConfig {
  float alpha = 0.05f;
  int epochs = 30;
  int batch_size = 8;
  float mux_alpha = 0.05f;
  int mux_epochs = 20;
  float lambda_distill = 1.0f;
  bool contrastive_into_backbone = true;
};

struct EvalConfig {
  bool export_pca = false;
};

/// One run, fully reproducible from this struct plus nothing else. Loaded
/// from a JSON file with the documented key namespace (seed, shared_dim,
/// meta_dim, models[], mux, data.*, train.*, loss.*, router.*, cost.*,
/// eval.*); unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int shared_dim = 32;
  int meta_dim = 16;
  std::vector<Architecture> models;
  Architecture mux_arch;
  PlantedSpec planted;
  int train_samples = 6000;
  /// Held-out split the multiplexer trains on. Stacking needs weights fit on
  /// predictions the base models did not memorize; reusing the zoo's own
  /// training split collapses the mux onto whichever model overfits hardest.
  int mux_samples = 2000;
  int val_samples = 1000;
  TrainConfig train;
  bool literal_eq2 = false;
  RoutePolicy policy;
  CostConfig cost;
  EvalConfig eval;

  void validate() const;
};

/// Desk-scale defaults: three row-band models over 1x16x16 inputs and a
/// four-convolution multiplexer.
RunConfig default_config();

RunConfig load_config(const std::string& path);

/// Resolved configuration as canonical JSON (also what gen-data and
/// training write next to their outputs for provenance).
std::string config_to_json(const RunConfig& cfg);

}  // namespace mux
