#pragma once

#include <vector>

#include "mux/tensor.hpp"

namespace mux {

/// Handle to a node on a GradTape. Only valid for the tape that created it.
struct Var {
  int node = -1;
  std::uint64_t tape = 0;
};

/// Reverse-mode tape over a fixed set of operations: enough to express the
/// classifier, projection-head, contrastive, stacking and distillation
/// losses used here, and nothing more. Values are computed eagerly with the
/// forward kernels from tensor.hpp; backward() replays the recording in
/// reverse and accumulates per-node gradients.
///
/// A tape is single-threaded. Leaves hold parameters (gradients wanted),
/// constants hold data and frozen activations (no gradients).
class GradTape {
 public:
  GradTape();

  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  Var transpose(Var x);
  Var add(Var a, Var b);
  /// [B x N] plus a length-N bias row. The only broadcast in the library.
  Var add_bias(Var x, Var bias);
  /// [B x F x H x W] plus a length-F per-channel bias.
  Var add_channel_bias(Var x, Var bias);
  Var relu(Var x);
  Var conv2d(Var x, Var kernels, int stride);
  /// Crops rows [r0, r1) of the H axis of a [B x C x H x W] input.
  Var slice_rows(Var x, int r0, int r1);
  Var flatten(Var x);
  Var softmax(Var x);
  /// Per-sample cross-entropy of logit rows against integer labels -> [B].
  Var softmax_xent(Var logits, std::vector<int> labels);
  /// Per-sample -log(probs[b, label_b] + eps) -> [B].
  Var nll_rows(Var probs, std::vector<int> labels, float eps);
  /// y[b,k] = sum_i w[b,i] * probs_i[b,k] with probs_i constant -> [B x K].
  Var weighted_mix(Var w, std::vector<Tensor> probs);
  Var row_dot(Var a, Var b);
  Var row_dot_const(Var a, Tensor c);
  Var l2_normalize_rows(Var x);
  /// Scales column j of x by row[j] (row is constant).
  Var mul_row_const(Var x, Tensor row);
  Var mul_const(Var x, Tensor c);
  Var affine(Var x, float scale, float shift);
  /// log(clamp(x, lo, hi)); the clamp keeps pair losses finite at d = 0, 1.
  Var log_clamp(Var x, float lo, float hi);
  Var sum(Var x);
  Var mean(Var x);

  const Tensor& value(Var v) const;

  class Gradients {
   public:
    explicit Gradients(std::vector<Tensor> g, std::uint64_t tape) : grads_(std::move(g)), tape_(tape) {}
    const Tensor& at(Var v) const;

   private:
    std::vector<Tensor> grads_;
    std::uint64_t tape_;
  };

  /// Reverse pass from a scalar loss recorded on this tape.
  Gradients backward(Var loss) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, Const, MatMul, Transpose, Add, AddBias, AddChannelBias, Relu, Conv2d,
    SliceRows, Flatten, Softmax, SoftmaxXent, NllRows, WeightedMix, RowDot,
    RowDotConst, L2NormRows, MulRowConst, MulConst, Affine, LogClamp, Sum, Mean,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor value;
    Tensor payload;            // op-specific constant (mask, row, dot target)
    std::vector<Tensor> mix;   // WeightedMix model probabilities
    std::vector<int> labels;
    float f0 = 0.0f, f1 = 0.0f;
    int i0 = 0, i1 = 0;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  int check(Var v) const;

  std::vector<Node> nodes_;
  std::uint64_t id_;
};

/// In-place SGD update p <- p - alpha * g.
void sgd_step(Tensor& param, const Tensor& grad, float alpha);
void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, float alpha);

}  // namespace mux
