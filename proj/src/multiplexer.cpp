#include "mux/multiplexer.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mux/contrastive.hpp"
#include "mux/errors.hpp"

namespace mux {

using nlohmann::json;

namespace {

// Costs enter the stacking logits scale-normalized (divided by min_i c_i)
// so they stay bounded by the raw scores no matter the FLOPs magnitude;
// argmax(w) is invariant under uniform cost scaling either way.
std::vector<double> normalized_costs(const std::vector<double>& costs) {
  if (costs.empty()) throw ConfigError("mux needs at least one model cost");
  double cmin = 0.0;
  for (double c : costs) {
    if (!(c > 0.0)) throw NumericError("mux cost must be positive, got " + std::to_string(c));
    cmin = cmin == 0.0 ? c : std::min(cmin, c);
  }
  std::vector<double> out(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) out[i] = costs[i] / cmin;
  return out;
}

Tensor inverse_cost_row(const std::vector<double>& costs) {
  const std::vector<double> cn = normalized_costs(costs);
  Tensor row({static_cast<int>(cn.size())});
  for (std::size_t i = 0; i < cn.size(); ++i) row.data[i] = static_cast<float>(1.0 / cn[i]);
  return row;
}

}  // namespace

MuxNet make_mux(const Architecture& arch, int shared_dim, const std::vector<double>& costs,
                const std::vector<std::string>& model_ids, std::uint64_t seed) {
  if (arch.classes != 0) throw ConfigError("mux architecture must be a feature extractor (classes == 0)");
  const std::vector<int> out_shape = arch.output_shape();
  if (out_shape.size() != 1) throw ConfigError("mux architecture must end flattened to a meta-feature vector");
  const int meta = out_shape[0];
  if (costs.size() != model_ids.size() || costs.empty()) throw ConfigError("mux needs one cost per model id");
  normalized_costs(costs);  // validates positivity

  const int n = static_cast<int>(costs.size());
  MuxNet mux;
  mux.arch = arch;
  Rng rng(Rng::derive(seed, "mux.backbone"));
  mux.params = init_params(arch, rng);
  Rng vr(Rng::derive(seed, "mux.v"));
  mux.v = Tensor({n, meta});
  const float vstd = std::sqrt(1.0f / static_cast<float>(meta));
  for (float& x : mux.v.data) x = vr.normal(0.0f, vstd);
  Rng br(Rng::derive(seed, "mux.bridge"));
  mux.bridge = Tensor({meta, shared_dim});
  const float bstd = std::sqrt(1.0f / static_cast<float>(meta));
  for (float& x : mux.bridge.data) x = br.normal(0.0f, bstd);
  mux.costs = costs;
  mux.model_ids = model_ids;
  return mux;
}

std::int64_t mux_flops(const MuxNet& mux) {
  return count_flops(mux.arch) + 2LL * mux.n_models() * mux.meta_dim() + mux.n_models();
}

Tensor meta_features(const MuxNet& mux, const Tensor& x) {
  const bool batched = x.rank() == 4;
  Tensor in = x;
  if (!batched) {
    if (x.rank() != 3) throw NumericError("mux input must be [C x H x W] or [B x C x H x W]");
    in.shape = {1, x.dim(0), x.dim(1), x.dim(2)};
  }
  Tensor m = forward_pure(mux.arch, mux.params, in, nullptr);
  if (!batched) m.shape = {m.dim(1)};
  return m;
}

MuxOutput mux_weights(const Tensor& m, const Tensor& v, const std::vector<double>& costs) {
  const bool batched = m.rank() == 2;
  Tensor meta = m;
  if (!batched) {
    if (m.rank() != 1) throw NumericError("mux_weights expects [M] or [B x M] meta-features");
    meta.shape = {1, m.dim(0)};
  }
  if (v.rank() != 2 || v.dim(1) != meta.dim(1)) {
    throw NumericError("stacking matrix must be [N x M] matching meta width");
  }
  if (static_cast<int>(costs.size()) != v.dim(0)) throw NumericError("one cost per stacking row required");
  const std::vector<double> cn = normalized_costs(costs);

  const int B = meta.dim(0), M = meta.dim(1), N = v.dim(0);
  Tensor logits({B, N});
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < N; ++i) {
      double acc = 0.0;
      for (int j = 0; j < M; ++j) acc += static_cast<double>(v.at(i, j)) * meta.at(b, j);
      logits.at(b, i) = static_cast<float>(acc / cn[static_cast<std::size_t>(i)]);
    }
  }
  check_finite(logits, "mux_weights");
  MuxOutput out;
  out.logits = logits;
  out.weights = softmax(logits);
  out.meta = meta;
  if (!batched) {
    out.logits.shape = {N};
    out.weights.shape = {N};
    out.meta.shape = {M};
  }
  return out;
}

MuxOutput mux_forward(const MuxNet& mux, const Tensor& x) {
  return mux_weights(meta_features(mux, x), mux.v, mux.costs);
}

Tensor ensemble_predict(const Tensor& w, const std::vector<Tensor>& model_logits) {
  if (w.rank() != 1 || static_cast<int>(model_logits.size()) != w.dim(0)) {
    throw NumericError("ensemble_predict expects one weight per model");
  }
  if (model_logits.empty()) throw NumericError("ensemble_predict: no models");
  const int classes = model_logits[0].dim(model_logits[0].rank() - 1);
  Tensor mixed({classes});
  for (std::size_t i = 0; i < model_logits.size(); ++i) {
    if (model_logits[i].rank() != 1 || model_logits[i].dim(0) != classes) {
      throw NumericError("ensemble_predict: class-count mismatch across models");
    }
    const Tensor p = softmax(model_logits[i]);
    for (int k = 0; k < classes; ++k) {
      mixed.data[static_cast<std::size_t>(k)] += w.data[i] * p.data[static_cast<std::size_t>(k)];
    }
  }
  check_finite(mixed, "ensemble_predict");
  return mixed;
}

double mux_loss(const Tensor& y_ens, int label, float eps) {
  if (y_ens.rank() != 1) throw NumericError("mux_loss expects a probability vector");
  if (label < 0 || label >= y_ens.dim(0)) throw NumericError("mux_loss label out of range");
  return -std::log(static_cast<double>(y_ens.data[static_cast<std::size_t>(label)]) + eps);
}

double distill_loss(const MuxNet& mux, const Tensor& m, const std::vector<Tensor>& embeddings) {
  if (m.rank() != 1 || m.dim(0) != mux.meta_dim()) throw NumericError("distill_loss expects a meta-feature vector");
  Tensor row = m;
  row.shape = {1, m.dim(0)};
  Tensor bridged = l2_normalize(matmul(row, mux.bridge));
  bridged.shape = {bridged.dim(1)};
  double loss = 0.0;
  for (const Tensor& e : embeddings) loss += 1.0 - cosine_distance(bridged, e);
  return loss;
}

MuxStepResult mux_train_step(MuxNet& mux, const std::vector<CostedModel>& frozen_models,
                             const Batch& batch, const MuxTrainOptions& opt) {
  const int N = mux.n_models();
  if (static_cast<int>(frozen_models.size()) != N) throw ConfigError("mux_train_step: model count mismatch");
  if (batch.inputs.dim(0) == 0) throw ConfigError("mux_train_step: empty batch");

  // Frozen-model outputs become constants: probabilities for the stacking
  // objective, projected embeddings for distillation.
  std::vector<Tensor> probs;
  std::vector<Tensor> proj;
  for (const CostedModel& m : frozen_models) {
    auto [logits, emb] = m.model.forward(batch.inputs);
    probs.push_back(softmax(logits));
    proj.push_back(m.head.project(emb));
  }

  GradTape tape;
  const Var input = tape.constant(batch.inputs);
  std::vector<Var> theta;
  const Var meta = forward_taped(tape, mux.arch, mux.params, input, &theta, nullptr);
  const Var v = tape.leaf(mux.v);
  const Var bridge = tape.leaf(mux.bridge);

  const Var scores = tape.matmul(meta, tape.transpose(v));
  const Var logits = tape.mul_row_const(scores, inverse_cost_row(mux.costs));
  const Var w = tape.softmax(logits);
  const Var y_ens = tape.weighted_mix(w, probs);
  const Var l_mux = tape.mean(tape.nll_rows(y_ens, batch.labels, opt.eps));

  const Var bridged = tape.l2_normalize_rows(tape.matmul(meta, bridge));
  Var distill_sum = tape.constant(Tensor::scalar(0.0f));
  for (int i = 0; i < N; ++i) {
    const Var d = tape.affine(tape.row_dot_const(bridged, proj[static_cast<std::size_t>(i)]), 0.5f, 0.5f);
    distill_sum = tape.add(distill_sum, tape.mean(tape.affine(d, -1.0f, 1.0f)));
  }

  const Var total = tape.add(l_mux, tape.affine(distill_sum, opt.lambda_distill, 0.0f));

  MuxStepResult res;
  res.mux_loss = tape.value(l_mux).data[0];
  res.distill = tape.value(distill_sum).data[0];
  res.total = tape.value(total).data[0];
  if (!std::isfinite(res.total)) throw NumericError("mux_train_step: non-finite loss");

  if (opt.alpha > 0.0f) {
    const GradTape::Gradients grads = tape.backward(total);
    for (std::size_t p = 0; p < mux.params.size(); ++p) sgd_step(mux.params[p], grads.at(theta[p]), opt.alpha);
    sgd_step(mux.v, grads.at(v), opt.alpha);
    sgd_step(mux.bridge, grads.at(bridge), opt.alpha);
  }
  return res;
}

void save_mux(const std::string& path, const MuxNet& mux, std::uint64_t seed, const TrainMeta& meta) {
  json desc;
  desc["kind"] = "multiplexer";
  desc["arch"] = json::parse(mux.arch.to_json());
  desc["meta_dim"] = mux.meta_dim();
  desc["shared_dim"] = mux.shared_dim();
  desc["n_models"] = mux.n_models();
  desc["model_ids"] = mux.model_ids;
  desc["costs"] = mux.costs;
  desc["extra_tensors"] = {"v", "bridge"};
  desc["seed"] = seed;
  desc["metadata"] = {{"epochs", meta.epochs}, {"final_losses", meta.final_losses}, {"val_accuracy", meta.val_accuracy}};
  CheckpointFile f;
  f.descriptor = desc.dump();
  f.tensors = mux.params;
  f.tensors.push_back(mux.v);
  f.tensors.push_back(mux.bridge);
  write_muxc(path, f);
}

LoadedMux load_mux(const std::string& path) {
  CheckpointFile f = read_muxc(path);
  json desc;
  try {
    desc = json::parse(f.descriptor);
  } catch (const json::exception& e) {
    throw IoError(path + ": bad checkpoint descriptor: " + e.what());
  }
  if (desc.value("kind", "") != "multiplexer") throw IoError(path + ": not a multiplexer checkpoint");
  LoadedMux out;
  out.mux.arch = Architecture::from_json(desc.at("arch").dump());
  out.mux.costs = desc.at("costs").get<std::vector<double>>();
  out.mux.model_ids = desc.at("model_ids").get<std::vector<std::string>>();
  out.seed = desc.value("seed", std::uint64_t{0});
  if (desc.contains("metadata")) {
    const json& jm = desc.at("metadata");
    out.meta.epochs = jm.value("epochs", 0);
    if (jm.contains("final_losses")) out.meta.final_losses = jm.at("final_losses").get<std::vector<double>>();
    out.meta.val_accuracy = jm.value("val_accuracy", -1.0);
  }
  Rng scratch(0);
  const std::size_t n_backbone = init_params(out.mux.arch, scratch).size();
  if (f.tensors.size() != n_backbone + 2) {
    throw IoError(path + ": expected " + std::to_string(n_backbone + 2) + " tensors, found " + std::to_string(f.tensors.size()));
  }
  out.mux.params.assign(f.tensors.begin(), f.tensors.begin() + static_cast<std::ptrdiff_t>(n_backbone));
  out.mux.v = f.tensors[n_backbone];
  out.mux.bridge = f.tensors[n_backbone + 1];
  const int meta_dim = desc.at("meta_dim").get<int>();
  const int shared_dim = desc.at("shared_dim").get<int>();
  const int n_models = desc.at("n_models").get<int>();
  if (out.mux.v.rank() != 2 || out.mux.v.dim(0) != n_models || out.mux.v.dim(1) != meta_dim ||
      out.mux.bridge.rank() != 2 || out.mux.bridge.dim(0) != meta_dim || out.mux.bridge.dim(1) != shared_dim ||
      static_cast<int>(out.mux.costs.size()) != n_models) {
    throw IoError(path + ": stacking tensors inconsistent with descriptor");
  }
  return out;
}

}  // namespace mux
