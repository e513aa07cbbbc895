#pragma once

#include <filesystem>
#include <string>

#include "mux/config.hpp"

namespace mux {

/// Fixed output layout under one run directory. Primary outputs are
/// deterministic for a given config+seed; the only timestamped file is the
/// run.log sidecar.
struct RunPaths {
  std::filesystem::path out;

  std::filesystem::path data_dir() const { return out / "data"; }
  std::filesystem::path checkpoints_dir() const { return out / "checkpoints"; }
  std::filesystem::path logs_dir() const { return out / "logs"; }
  std::filesystem::path reports_dir() const { return out / "reports"; }
  std::filesystem::path train_file() const { return data_dir() / "train.muxd"; }
  std::filesystem::path mux_train_file() const { return data_dir() / "mux_train.muxd"; }
  std::filesystem::path val_file() const { return data_dir() / "val.muxd"; }
  std::filesystem::path model_checkpoint(const std::string& id) const { return checkpoints_dir() / (id + ".muxc"); }
  std::filesystem::path mux_checkpoint() const { return checkpoints_dir() / "mux.muxc"; }
  std::filesystem::path embeddings_csv() const { return out / "embeddings.csv"; }
  std::filesystem::path embeddings_pca_csv() const { return out / "embeddings_pca.csv"; }
  std::filesystem::path run_log() const { return out / "run.log"; }
};

void run_gen_data(const RunConfig& cfg, const RunPaths& paths);
void run_train_zoo(const RunConfig& cfg, const RunPaths& paths);
void run_train_mux(const RunConfig& cfg, const RunPaths& paths);
void run_evaluate(const RunConfig& cfg, const RunPaths& paths);
void run_simulate(const RunConfig& cfg, const RunPaths& paths);

}  // namespace mux
