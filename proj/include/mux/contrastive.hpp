#pragma once

#include <vector>

#include "mux/dataset.hpp"
#include "mux/model.hpp"

namespace mux {

/// Pair agreement for one sample: +1 when both models predict the true
/// label, -1 when exactly one does, 0 when neither does. Symmetric in
/// (i, j) by construction.
int pair_coefficient(int pred_i, int pred_j, int label);

/// Cosine distance remapped into [0, 1]: d = (1 + e1.e2) / 2 over unit
/// vectors, so 1 means identical direction and 0 means opposite. Inputs
/// must be unit-norm within 1e-4.
double cosine_distance(const Tensor& e1, const Tensor& e2);

struct ContrastiveOptions {
  /// Default pulls +1 pairs together (-log d) and pushes -1 pairs apart
  /// (-log(1-d)). The literal flag keeps the printed sign pattern
  /// (+log d on +1 pairs, -log d on -1 pairs) for comparison runs.
  bool literal_eq2 = false;
  float eps = 1e-6f;
};

/// Pairwise contrastive loss over the ordered-pair double sum for one
/// sample. Returns 0 for a single model.
double contrastive_loss(const std::vector<Tensor>& embeddings, const std::vector<int>& preds,
                        int label, const ContrastiveOptions& opt = {});

struct ContrastiveBatchResult {
  double loss = 0.0;              // batch-mean contrastive loss
  std::vector<Tensor> distances;  // per sample, [N x N], diagonal 1
};

/// Pure batch evaluation used by reports and tests (no gradients).
ContrastiveBatchResult contrastive_batch(const std::vector<Tensor>& projected,
                                         const std::vector<std::vector<int>>& preds,
                                         const std::vector<int>& labels,
                                         const ContrastiveOptions& opt = {});

struct JointTrainOptions {
  float alpha = 0.05f;
  bool literal_eq2 = false;
  /// When false, contrastive gradients stop at the projection heads instead
  /// of flowing into the backbones.
  bool contrastive_into_backbone = true;
  float eps = 1e-6f;
};

struct JointStepResult {
  std::vector<double> model_loss;  // L_i = L_cnt + CE_i, batch means
  double contrastive = 0.0;
  std::vector<double> cross_entropy;
};

/// One step of the joint phase: every model takes an SGD step on
/// L_i = L_cnt + L_ce_i; heads train through L_cnt. Aborts with
/// NumericError before touching parameters if any loss is non-finite.
JointStepResult joint_train_step(std::vector<CostedModel>& models, const Batch& batch,
                                 const JointTrainOptions& opt);

}  // namespace mux
