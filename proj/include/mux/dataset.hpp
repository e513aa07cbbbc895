#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/rng.hpp"
#include "mux/tensor.hpp"

namespace mux {

inline constexpr std::uint32_t kMuxdVersion = 1;

struct Dataset {
  Tensor inputs;            // [N x C x H x W]
  std::vector<int> labels;  // class indices
  std::string split;        // "train" / "val"; not serialized

  int size() const { return inputs.rank() == 4 ? inputs.dim(0) : 0; }
  Tensor sample(int i) const;
};

void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

/// One expertise region: a class pool, the row band its class patterns live
/// in, and the fraction of samples it owns.
struct PlantedRegion {
  std::vector<int> classes;
  int row0 = 0, row1 = 0;
  double fraction = 0.0;
};

/// Synthetic planted-expertise data. Each sample belongs to one region;
/// its class pattern is rendered into that region's row band (or into every
/// band for a shared sample, or nowhere for an unsolvable one), over
/// Gaussian background noise. A model whose view is restricted to band i
/// can only ever solve samples planted in band i, which pins each model's
/// expertise domain by construction.
struct PlantedSpec {
  int classes = 10;
  std::vector<int> input_shape = {1, 16, 16};
  std::vector<PlantedRegion> regions;
  double shared_fraction = 0.30;      // planted in every band: solvable by all
  double unsolvable_fraction = 0.05;  // planted nowhere: solvable by none
  double noise = 0.5;
  std::uint64_t seed = 1;             // pattern seed, shared across splits

  void validate() const;
};

/// Default three-band spec matching the default model zoo.
PlantedSpec default_planted_spec(std::uint64_t seed);

struct PlantedDataset {
  Dataset data;
  std::vector<int> region;               // owning region per sample
  std::vector<std::uint32_t> solvers;    // bitmask of regions whose band was planted
  std::vector<int> hardness;             // #regions - popcount(solvers)
};

/// Deterministic for a fixed (spec, sample_seed) pair: same bytes on every
/// run. Class patterns derive from spec.seed only, so train/val splits share
/// them.
PlantedDataset generate_planted(const PlantedSpec& spec, int num_samples, std::uint64_t sample_seed,
                                const std::string& split_tag);

void save_hardness_csv(const std::string& path, const PlantedDataset& d);

struct Batch {
  Tensor inputs;            // [B x C x H x W]
  std::vector<int> labels;
  std::vector<int> indices;
};

/// One epoch of shuffled batches: a seeded permutation cut into batch_size
/// chunks, final short batch kept.
std::vector<Batch> make_batches(const Dataset& d, int batch_size, Rng& rng);

/// Contiguous evaluation batches, no shuffle.
std::vector<Batch> make_eval_batches(const Dataset& d, int batch_size);

}  // namespace mux
