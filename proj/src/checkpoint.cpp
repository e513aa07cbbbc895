#include "mux/checkpoint.hpp"

#include <algorithm>

#include <json.hpp>

#include "mux/binio.hpp"
#include "mux/errors.hpp"

namespace mux {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'U', 'X', 'C'};

json meta_to_json(const TrainMeta& meta) {
  return json{{"epochs", meta.epochs}, {"final_losses", meta.final_losses}, {"val_accuracy", meta.val_accuracy}};
}

TrainMeta meta_from_json(const json& j) {
  TrainMeta m;
  m.epochs = j.value("epochs", 0);
  if (j.contains("final_losses")) m.final_losses = j.at("final_losses").get<std::vector<double>>();
  m.val_accuracy = j.value("val_accuracy", -1.0);
  return m;
}

}  // namespace

void write_muxc(const std::string& path, const CheckpointFile& file) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kMuxcVersion);
  w.str(file.descriptor);
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  for (const Tensor& t : file.tensors) w.tensor(t);
  w.finish_to_file(path);
}

CheckpointFile read_muxc(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    throw IoError(path + ": bad magic, not a MUXC checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version > kMuxcVersion) {
    throw IoError(path + ": checkpoint version " + std::to_string(version) +
                  " is newer than supported version " + std::to_string(kMuxcVersion));
  }
  CheckpointFile f;
  f.descriptor = r.str();
  const std::uint32_t n = r.u32();
  if (n > 100000) throw IoError(path + ": implausible tensor count");
  f.tensors.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) f.tensors.push_back(r.tensor());
  return f;
}

void save_classifier(const std::string& path, const CostedModel& m, std::uint64_t seed, const TrainMeta& meta) {
  json desc;
  desc["kind"] = "classifier";
  desc["arch"] = json::parse(m.model.arch.to_json());
  desc["shared_dim"] = m.head.shared_dim();
  desc["seed"] = seed;
  desc["metadata"] = meta_to_json(meta);
  CheckpointFile f;
  f.descriptor = desc.dump();
  f.tensors = m.model.params;
  f.tensors.push_back(m.head.weight);
  write_muxc(path, f);
}

LoadedClassifier load_classifier(const std::string& path) {
  CheckpointFile f = read_muxc(path);
  json desc;
  try {
    desc = json::parse(f.descriptor);
  } catch (const json::exception& e) {
    throw IoError(path + ": bad checkpoint descriptor: " + e.what());
  }
  if (desc.value("kind", "") != "classifier") throw IoError(path + ": not a classifier checkpoint");
  LoadedClassifier out;
  out.model.model.arch = Architecture::from_json(desc.at("arch").dump());
  const int shared_dim = desc.at("shared_dim").get<int>();
  out.seed = desc.value("seed", std::uint64_t{0});
  if (desc.contains("metadata")) out.meta = meta_from_json(desc.at("metadata"));

  // backbone tensors then the projection head
  Rng scratch(0);
  const std::size_t n_backbone = init_params(out.model.model.arch, scratch).size();
  if (f.tensors.size() != n_backbone + 1) {
    throw IoError(path + ": expected " + std::to_string(n_backbone + 1) + " tensors, found " + std::to_string(f.tensors.size()));
  }
  out.model.model.params.assign(f.tensors.begin(), f.tensors.begin() + static_cast<std::ptrdiff_t>(n_backbone));
  out.model.head.weight = f.tensors.back();
  if (out.model.head.weight.rank() != 2 || out.model.head.weight.dim(0) != out.model.model.embedding_dim() ||
      out.model.head.weight.dim(1) != shared_dim) {
    throw IoError(path + ": projection head shape inconsistent with descriptor");
  }
  out.model.flops = count_flops(out.model.model.arch);
  return out;
}

}  // namespace mux
