#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/checkpoint.hpp"
#include "mux/dataset.hpp"
#include "mux/model.hpp"

namespace mux {

/// The meta-feature network m(.; Theta) plus the stacking matrix v and the
/// learned bridge mapping meta-features into the shared embedding space for
/// distillation.
struct MuxNet {
  Architecture arch;             // feature extractor (classes == 0)
  std::vector<Tensor> params;
  Tensor v;                      // [N x M] stacking weights
  Tensor bridge;                 // [M x shared_dim] distillation map
  std::vector<double> costs;     // raw per-model costs c_i (FLOPs)
  std::vector<std::string> model_ids;

  int meta_dim() const { return v.dim(1); }
  int n_models() const { return v.dim(0); }
  int shared_dim() const { return bridge.dim(1); }
};

MuxNet make_mux(const Architecture& arch, int shared_dim, const std::vector<double>& costs,
                const std::vector<std::string>& model_ids, std::uint64_t seed);

/// FLOPs of one routing decision: meta-feature backbone plus the stacking
/// matmul and softmax.
std::int64_t mux_flops(const MuxNet& mux);

/// Meta-feature vector m(x); input [C x H x W] or [B x C x H x W].
Tensor meta_features(const MuxNet& mux, const Tensor& x);

struct MuxOutput {
  Tensor weights;  // [N] or [B x N]; rows sum to 1
  Tensor logits;   // cost-discounted scores before the softmax
  Tensor meta;     // [M] or [B x M]
};

/// Stacking weights from meta-features: logit_i = (sum_j v_ij m_j) / c_i
/// with costs normalized by max_i c_i, then a softmax. Costs must be
/// positive.
MuxOutput mux_weights(const Tensor& m, const Tensor& v, const std::vector<double>& costs);

/// Full multiplexer pass: meta features then stacking weights.
MuxOutput mux_forward(const MuxNet& mux, const Tensor& x);

/// y_ENS = sum_i w_i softmax(logits_i); weights and per-model logits for a
/// single sample.
Tensor ensemble_predict(const Tensor& w, const std::vector<Tensor>& model_logits);

/// Negative log-likelihood -log(y_ens[label] + eps).
double mux_loss(const Tensor& y_ens, int label, float eps = 1e-6f);

/// Distillation pull toward every model's projected embedding:
/// sum_i (1 - d(m_bridged, e_i)) with m_bridged the unit-normalized bridge
/// output.
double distill_loss(const MuxNet& mux, const Tensor& m, const std::vector<Tensor>& embeddings);

struct MuxTrainOptions {
  float alpha = 0.05f;
  float lambda_distill = 1.0f;
  float eps = 1e-6f;
};

struct MuxStepResult {
  double mux_loss = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

/// One SGD step on batch-mean L = L_mux + lambda * L_distill. Models and
/// heads are frozen; only Theta, v and the bridge move.
MuxStepResult mux_train_step(MuxNet& mux, const std::vector<CostedModel>& frozen_models,
                             const Batch& batch, const MuxTrainOptions& opt);

void save_mux(const std::string& path, const MuxNet& mux, std::uint64_t seed, const TrainMeta& meta);

struct LoadedMux {
  MuxNet mux;
  std::uint64_t seed = 0;
  TrainMeta meta;
};

LoadedMux load_mux(const std::string& path);

}  // namespace mux
