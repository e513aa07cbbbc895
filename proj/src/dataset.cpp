#include "mux/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "mux/binio.hpp"
#include "mux/errors.hpp"

namespace mux {

namespace {

constexpr char kMagic[4] = {'M', 'U', 'X', 'D'};

}  // namespace

Tensor Dataset::sample(int i) const {
  const int C = inputs.dim(1), H = inputs.dim(2), W = inputs.dim(3);
  const std::size_t n = static_cast<std::size_t>(C) * H * W;
  Tensor t({C, H, W});
  std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(n) * i, n, t.data.begin());
  return t;
}

void save_dataset(const std::string& path, const Dataset& d) {
  if (d.inputs.rank() != 4) throw IoError("dataset inputs must be [N x C x H x W]");
  if (static_cast<int>(d.labels.size()) != d.size()) throw IoError("dataset label count mismatch");
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kMuxdVersion);
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(3);
  for (int i = 1; i < 4; ++i) w.u32(static_cast<std::uint32_t>(d.inputs.dim(i)));
  for (float v : d.inputs.data) w.f32(v);
  for (int l : d.labels) w.u32(static_cast<std::uint32_t>(l));
  w.finish_to_file(path);
}

Dataset load_dataset(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    throw IoError(path + ": bad magic, not a MUXD dataset");
  }
  const std::uint32_t version = r.u32();
  if (version > kMuxdVersion) {
    throw IoError(path + ": dataset version " + std::to_string(version) +
                  " is newer than supported version " + std::to_string(kMuxdVersion));
  }
  const std::uint32_t count = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank != 3) throw IoError(path + ": expected [C, H, W] sample shape");
  std::vector<int> shape{static_cast<int>(count)};
  std::int64_t per_sample = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const int d = static_cast<int>(r.u32());
    if (d <= 0 || d > 1 << 20) throw IoError(path + ": invalid dimension");
    shape.push_back(d);
    per_sample *= d;
  }
  Dataset d;
  std::vector<float> data(static_cast<std::size_t>(per_sample) * count);
  for (float& v : data) v = r.f32();
  d.inputs = Tensor::from(std::move(shape), std::move(data));
  d.labels.resize(count);
  for (auto& l : d.labels) l = static_cast<int>(r.u32());
  return d;
}

void PlantedSpec::validate() const {
  if (classes < 2) throw ConfigError("planted spec: need at least 2 classes");
  if (input_shape.size() != 3) throw ConfigError("planted spec: input shape must be [C, H, W]");
  if (regions.empty()) throw ConfigError("planted spec: need at least one region");
  if (regions.size() > 32) throw ConfigError("planted spec: at most 32 regions");
  double total = 0.0;
  for (const PlantedRegion& r : regions) {
    if (r.fraction < 0.0 || r.fraction > 1.0) throw ConfigError("planted spec: region fraction outside [0, 1]");
    if (r.row0 < 0 || r.row1 > input_shape[1] || r.row0 >= r.row1) throw ConfigError("planted spec: region band out of bounds");
    if (r.classes.empty()) throw ConfigError("planted spec: region has no classes");
    for (int c : r.classes) {
      if (c < 0 || c >= classes) throw ConfigError("planted spec: region class out of range");
    }
    total += r.fraction;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ConfigError("planted spec: region fractions sum to " + std::to_string(total) + ", expected 1");
  }
  if (shared_fraction < 0.0 || unsolvable_fraction < 0.0 || shared_fraction + unsolvable_fraction > 1.0) {
    throw ConfigError("planted spec: shared/unsolvable fractions invalid");
  }
  if (noise < 0.0) throw ConfigError("planted spec: noise must be >= 0");
}

PlantedSpec default_planted_spec(std::uint64_t seed) {
  PlantedSpec s;
  s.seed = seed;
  std::vector<int> all(10);
  for (int i = 0; i < 10; ++i) all[static_cast<std::size_t>(i)] = i;
  s.regions = {
      PlantedRegion{all, 0, 5, 1.0 / 3.0},
      PlantedRegion{all, 5, 10, 1.0 / 3.0},
      PlantedRegion{all, 10, 16, 1.0 - 2.0 / 3.0},
  };
  return s;
}

PlantedDataset generate_planted(const PlantedSpec& spec, int num_samples, std::uint64_t sample_seed,
                                const std::string& split_tag) {
  spec.validate();
  if (num_samples <= 0) throw ConfigError("generate_planted: num_samples must be positive");
  const int C = spec.input_shape[0], H = spec.input_shape[1], W = spec.input_shape[2];
  const int n_regions = static_cast<int>(spec.regions.size());

  // Class patterns are +-1 per band pixel, drawn once per (region, class)
  // from the spec seed in a fixed order so both splits agree.
  Rng pattern_rng(Rng::derive(spec.seed, "planted.patterns"));
  std::vector<std::vector<Tensor>> patterns(static_cast<std::size_t>(n_regions));
  for (int q = 0; q < n_regions; ++q) {
    const PlantedRegion& reg = spec.regions[static_cast<std::size_t>(q)];
    const int rows = reg.row1 - reg.row0;
    for (int c = 0; c < spec.classes; ++c) {
      Tensor p({C, rows, W});
      for (float& v : p.data) v = pattern_rng.next_u64() & 1 ? 1.0f : -1.0f;
      patterns[static_cast<std::size_t>(q)].push_back(std::move(p));
    }
  }

  Rng rng(sample_seed);
  PlantedDataset out;
  out.data.split = split_tag;
  out.data.inputs = Tensor({num_samples, C, H, W});
  out.data.labels.resize(static_cast<std::size_t>(num_samples));
  out.region.resize(static_cast<std::size_t>(num_samples));
  out.solvers.resize(static_cast<std::size_t>(num_samples));
  out.hardness.resize(static_cast<std::size_t>(num_samples));

  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t per_sample = static_cast<std::size_t>(C) * plane;

  for (int s = 0; s < num_samples; ++s) {
    // owning region
    const double u_region = rng.next_double();
    int region = n_regions - 1;
    double acc = 0.0;
    for (int q = 0; q < n_regions; ++q) {
      acc += spec.regions[static_cast<std::size_t>(q)].fraction;
      if (u_region < acc) {
        region = q;
        break;
      }
    }
    const PlantedRegion& reg = spec.regions[static_cast<std::size_t>(region)];
    const int label = reg.classes[rng.next_below(static_cast<std::uint32_t>(reg.classes.size()))];

    // which bands get the pattern
    const double u_mode = rng.next_double();
    std::uint32_t solvers = 0;
    if (u_mode < spec.unsolvable_fraction) {
      solvers = 0;
    } else if (u_mode < spec.unsolvable_fraction + spec.shared_fraction) {
      solvers = (1u << n_regions) - 1;
    } else {
      solvers = 1u << region;
    }

    float* x = out.data.inputs.data.data() + static_cast<std::size_t>(s) * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) x[i] = static_cast<float>(spec.noise) * rng.normal();
    for (int q = 0; q < n_regions; ++q) {
      if (!(solvers >> q & 1)) continue;
      const PlantedRegion& band = spec.regions[static_cast<std::size_t>(q)];
      const Tensor& pat = patterns[static_cast<std::size_t>(q)][static_cast<std::size_t>(label)];
      for (int c = 0; c < C; ++c) {
        for (int h = band.row0; h < band.row1; ++h) {
          float* row = x + static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(h) * W;
          const float* prow = pat.data.data() + (static_cast<std::size_t>(c) * (band.row1 - band.row0) + (h - band.row0)) * W;
          for (int w = 0; w < W; ++w) row[w] += prow[w];
        }
      }
    }

    out.data.labels[static_cast<std::size_t>(s)] = label;
    out.region[static_cast<std::size_t>(s)] = region;
    out.solvers[static_cast<std::size_t>(s)] = solvers;
    out.hardness[static_cast<std::size_t>(s)] = n_regions - std::popcount(solvers);
  }
  check_finite(out.data.inputs, "generate_planted");
  return out;
}

void save_hardness_csv(const std::string& path, const PlantedDataset& d) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "sample,label,region,solver_mask,hardness\n";
  for (std::size_t i = 0; i < d.region.size(); ++i) {
    out << i << ',' << d.data.labels[i] << ',' << d.region[i] << ',' << d.solvers[i] << ',' << d.hardness[i] << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

Batch gather(const Dataset& d, const std::vector<int>& idx) {
  const int C = d.inputs.dim(1), H = d.inputs.dim(2), W = d.inputs.dim(3);
  const std::size_t per_sample = static_cast<std::size_t>(C) * H * W;
  Batch b;
  b.inputs = Tensor({static_cast<int>(idx.size()), C, H, W});
  b.labels.reserve(idx.size());
  b.indices = idx;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(d.inputs.data.begin() + static_cast<std::ptrdiff_t>(per_sample * static_cast<std::size_t>(idx[i])),
                per_sample, b.inputs.data.begin() + static_cast<std::ptrdiff_t>(per_sample * i));
    b.labels.push_back(d.labels[static_cast<std::size_t>(idx[i])]);
  }
  return b;
}

}  // namespace

std::vector<Batch> make_batches(const Dataset& d, int batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const int n = d.size();
  const std::vector<std::uint32_t> perm = random_permutation(static_cast<std::uint32_t>(n), rng);
  std::vector<Batch> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    std::vector<int> idx(perm.begin() + start, perm.begin() + end);
    batches.push_back(gather(d, idx));
  }
  return batches;
}

std::vector<Batch> make_eval_batches(const Dataset& d, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const int n = d.size();
  std::vector<Batch> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    std::vector<int> idx;
    for (int i = start; i < end; ++i) idx.push_back(i);
    batches.push_back(gather(d, idx));
  }
  return batches;
}

}  // namespace mux
