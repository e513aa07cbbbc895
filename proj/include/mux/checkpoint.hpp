#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/model.hpp"

namespace mux {

inline constexpr std::uint32_t kMuxcVersion = 1;

/// Raw MUXC payload: magic "MUXC", u32 version, length-prefixed descriptor
/// (UTF-8 JSON), tensor records (u32 rank, u32 dims, f32 data, all
/// little-endian), trailing CRC32.
struct CheckpointFile {
  std::string descriptor;
  std::vector<Tensor> tensors;
};

void write_muxc(const std::string& path, const CheckpointFile& file);
CheckpointFile read_muxc(const std::string& path);

/// Training provenance carried inside checkpoints.
struct TrainMeta {
  int epochs = 0;
  std::vector<double> final_losses;
  double val_accuracy = -1.0;
};

void save_classifier(const std::string& path, const CostedModel& m, std::uint64_t seed, const TrainMeta& meta);

struct LoadedClassifier {
  CostedModel model;
  std::uint64_t seed = 0;
  TrainMeta meta;
};

LoadedClassifier load_classifier(const std::string& path);

}  // namespace mux
