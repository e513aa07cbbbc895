#include "mux/contrastive.hpp"

#include <cmath>

#include "mux/errors.hpp"

namespace mux {

namespace {

void check_unit(const Tensor& e, const char* who) {
  double sq = 0.0;
  for (float v : e.data) sq += static_cast<double>(v) * v;
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
    throw NumericError(std::string(who) + ": input is not unit-norm (|e| = " + std::to_string(std::sqrt(sq)) + ")");
  }
}

double pair_term(double d, int coeff, const ContrastiveOptions& opt) {
  if (coeff == 0) return 0.0;
  const double lo = opt.eps, hi = 1.0 - opt.eps;
  const double dc = d < lo ? lo : (d > hi ? hi : d);
  if (opt.literal_eq2) return coeff > 0 ? std::log(dc) : -std::log(dc);
  return coeff > 0 ? -std::log(dc) : -std::log(1.0 - dc);
}

}  // namespace

int pair_coefficient(int pred_i, int pred_j, int label) {
  if (pred_i < 0 || pred_j < 0 || label < 0) throw NumericError("pair_coefficient: negative class index");
  const bool ci = pred_i == label, cj = pred_j == label;
  if (ci && cj) return 1;
  if (ci != cj) return -1;
  return 0;
}

double cosine_distance(const Tensor& e1, const Tensor& e2) {
  if (!e1.same_shape(e2)) throw NumericError("cosine_distance shape mismatch");
  check_unit(e1, "cosine_distance");
  check_unit(e2, "cosine_distance");
  double dot = 0.0;
  for (std::size_t i = 0; i < e1.data.size(); ++i) dot += static_cast<double>(e1.data[i]) * e2.data[i];
  return (1.0 + dot) / 2.0;
}

double contrastive_loss(const std::vector<Tensor>& embeddings, const std::vector<int>& preds,
                        int label, const ContrastiveOptions& opt) {
  const int n = static_cast<int>(embeddings.size());
  if (static_cast<int>(preds.size()) != n) throw NumericError("contrastive_loss: one prediction per embedding required");
  for (const Tensor& e : embeddings) check_finite(e, "contrastive_loss");
  if (n < 2) return 0.0;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int coeff = pair_coefficient(preds[static_cast<std::size_t>(i)], preds[static_cast<std::size_t>(j)], label);
      if (coeff == 0) continue;
      loss += pair_term(cosine_distance(embeddings[static_cast<std::size_t>(i)], embeddings[static_cast<std::size_t>(j)]), coeff, opt);
    }
  }
  return loss;
}

ContrastiveBatchResult contrastive_batch(const std::vector<Tensor>& projected,
                                         const std::vector<std::vector<int>>& preds,
                                         const std::vector<int>& labels,
                                         const ContrastiveOptions& opt) {
  const int n = static_cast<int>(projected.size());
  if (n == 0) throw NumericError("contrastive_batch: no models");
  const int batch = projected[0].dim(0);
  const int dim = projected[0].dim(1);
  ContrastiveBatchResult out;
  out.distances.reserve(static_cast<std::size_t>(batch));
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    Tensor dm({n, n});
    std::vector<Tensor> rows;
    std::vector<int> p;
    for (int i = 0; i < n; ++i) {
      Tensor e({dim});
      for (int s = 0; s < dim; ++s) e.data[static_cast<std::size_t>(s)] = projected[static_cast<std::size_t>(i)].at(b, s);
      rows.push_back(std::move(e));
      p.push_back(preds[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)]);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        dm.at(i, j) = i == j ? 1.0f : static_cast<float>(cosine_distance(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]));
      }
    }
    total += contrastive_loss(rows, p, labels[static_cast<std::size_t>(b)], opt);
    out.distances.push_back(std::move(dm));
  }
  out.loss = total / batch;
  return out;
}

JointStepResult joint_train_step(std::vector<CostedModel>& models, const Batch& batch,
                                 const JointTrainOptions& opt) {
  const int n = static_cast<int>(models.size());
  if (n == 0) throw ConfigError("joint_train_step: no models");
  const int B = batch.inputs.dim(0);
  if (B == 0) throw ConfigError("joint_train_step: empty batch");
  const int classes = models[0].model.class_count();
  for (const CostedModel& m : models) {
    if (m.model.class_count() != classes) throw ConfigError("joint_train_step: models disagree on class count");
  }

  GradTape tape;
  const Var input = tape.constant(batch.inputs);

  std::vector<std::vector<Var>> param_vars(static_cast<std::size_t>(n));
  std::vector<Var> head_vars;
  std::vector<Var> ce_means;
  std::vector<Var> projections;
  std::vector<std::vector<int>> preds(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    CostedModel& m = models[static_cast<std::size_t>(i)];
    Var emb{};
    const Var logits = forward_taped(tape, m.model.arch, m.model.params, input,
                                     &param_vars[static_cast<std::size_t>(i)], &emb);
    ce_means.push_back(tape.mean(tape.softmax_xent(logits, batch.labels)));

    const Tensor& lv = tape.value(logits);
    for (int b = 0; b < B; ++b) {
      preds[static_cast<std::size_t>(i)].push_back(argmax(lv.data.data() + static_cast<std::size_t>(b) * classes, classes));
    }

    Var proj_src = emb;
    if (!opt.contrastive_into_backbone) proj_src = tape.constant(tape.value(emb));
    const Var head = tape.leaf(m.head.weight);
    head_vars.push_back(head);
    projections.push_back(tape.l2_normalize_rows(tape.matmul(proj_src, head)));
  }

  // Contrastive double sum over ordered pairs, masked per sample by the
  // pair coefficients, then batch-averaged.
  Var cnt_sum = tape.constant(Tensor::scalar(0.0f));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      Tensor pos_mask({B});
      Tensor neg_mask({B});
      bool any = false;
      for (int b = 0; b < B; ++b) {
        const int coeff = pair_coefficient(preds[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)],
                                           preds[static_cast<std::size_t>(j)][static_cast<std::size_t>(b)],
                                           batch.labels[static_cast<std::size_t>(b)]);
        if (coeff == 1) pos_mask.data[static_cast<std::size_t>(b)] = 1.0f;
        if (coeff == -1) neg_mask.data[static_cast<std::size_t>(b)] = 1.0f;
        any = any || coeff != 0;
      }
      if (!any) continue;
      const Var d = tape.affine(tape.row_dot(projections[static_cast<std::size_t>(i)], projections[static_cast<std::size_t>(j)]), 0.5f, 0.5f);
      const float lo = opt.eps, hi = 1.0f - opt.eps;
      if (opt.literal_eq2) {
        Tensor signed_mask = pos_mask;
        for (int b = 0; b < B; ++b) signed_mask.data[static_cast<std::size_t>(b)] -= neg_mask.data[static_cast<std::size_t>(b)];
        cnt_sum = tape.add(cnt_sum, tape.sum(tape.mul_const(tape.log_clamp(d, lo, hi), signed_mask)));
      } else {
        const Var pull = tape.sum(tape.mul_const(tape.affine(tape.log_clamp(d, lo, hi), -1.0f, 0.0f), pos_mask));
        const Var push = tape.sum(tape.mul_const(tape.affine(tape.log_clamp(tape.affine(d, -1.0f, 1.0f), lo, hi), -1.0f, 0.0f), neg_mask));
        cnt_sum = tape.add(cnt_sum, tape.add(pull, push));
      }
    }
  }
  const Var cnt_mean = tape.affine(cnt_sum, 1.0f / static_cast<float>(B), 0.0f);

  Var total = cnt_mean;
  for (const Var ce : ce_means) total = tape.add(total, ce);

  JointStepResult res;
  res.contrastive = tape.value(cnt_mean).data[0];
  for (int i = 0; i < n; ++i) {
    const double ce = tape.value(ce_means[static_cast<std::size_t>(i)]).data[0];
    res.cross_entropy.push_back(ce);
    res.model_loss.push_back(ce + res.contrastive);
    if (!std::isfinite(res.model_loss.back())) {
      throw NumericError("joint_train_step: non-finite loss for model " + models[static_cast<std::size_t>(i)].model.arch.id);
    }
  }

  if (opt.alpha > 0.0f) {
    const GradTape::Gradients grads = tape.backward(total);
    for (int i = 0; i < n; ++i) {
      CostedModel& m = models[static_cast<std::size_t>(i)];
      for (std::size_t p = 0; p < m.model.params.size(); ++p) {
        sgd_step(m.model.params[p], grads.at(param_vars[static_cast<std::size_t>(i)][p]), opt.alpha);
      }
      sgd_step(m.head.weight, grads.at(head_vars[static_cast<std::size_t>(i)]), opt.alpha);
    }
  }
  return res;
}

}  // namespace mux
