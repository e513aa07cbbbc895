#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/autograd.hpp"
#include "mux/rng.hpp"
#include "mux/tensor.hpp"

namespace mux {

/// One layer of a declarative architecture descriptor. Networks here are
/// plain sequences: crops, convolutions, dense layers and relus, ending in
/// a dense classification layer.
struct LayerDesc {
  enum class Type { Dense, Relu, Conv, CropRows, Flatten };
  Type type = Type::Relu;
  int in = 0, out = 0;              // Dense
  int in_ch = 0, out_ch = 0;        // Conv
  int kh = 0, kw = 0, stride = 1;   // Conv
  int r0 = 0, r1 = 0;               // CropRows

  static LayerDesc dense(int in, int out);
  static LayerDesc relu();
  static LayerDesc conv(int in_ch, int out_ch, int kh, int kw, int stride);
  static LayerDesc crop_rows(int r0, int r1);
  static LayerDesc flatten();
};

struct Architecture {
  std::string id;
  std::vector<int> input_shape;  // [C, H, W]
  int classes = 0;               // 0 for feature extractors (the multiplexer)
  std::vector<LayerDesc> layers;

  /// Walks the layer list and returns the output shape, validating every
  /// transition. Throws ConfigError on inconsistent descriptors.
  std::vector<int> output_shape() const;

  std::string to_json() const;
  static Architecture from_json(const std::string& text);
};

/// Parameter tensors for an architecture, in layer order (Dense: W then b,
/// Conv: kernels then b).
std::vector<Tensor> init_params(const Architecture& arch, Rng& rng);

/// Taped forward pass through every layer. Returns the final activation and
/// fills per-layer parameter Vars (used for the gradient step). When
/// embedding_out is non-null it receives the activation feeding the final
/// dense layer (the embedding, for classifier architectures).
Var forward_taped(GradTape& tape, const Architecture& arch, const std::vector<Tensor>& params,
                  Var input, std::vector<Var>* param_vars, Var* embedding_out);

/// Pure forward pass (no tape): returns the final activation; optionally
/// the embedding.
Tensor forward_pure(const Architecture& arch, const std::vector<Tensor>& params,
                    const Tensor& input, Tensor* embedding_out);

/// One of the N classifiers being multiplexed.
struct ClassifierModel {
  Architecture arch;
  std::vector<Tensor> params;

  int embedding_dim() const;
  int class_count() const { return arch.classes; }

  /// Forward for a [C x H x W] sample or [B x C x H x W] batch; logits plus
  /// the embedding (activation before the classification layer).
  std::pair<Tensor, Tensor> forward(const Tensor& x) const;
};

ClassifierModel make_classifier(const Architecture& arch, std::uint64_t seed);

/// Linear map h_i from a model's embedding space into the shared projection
/// space, followed by L2 normalization.
struct ProjectionHead {
  Tensor weight;  // [embedding_dim x shared_dim]

  int shared_dim() const { return weight.dim(1); }

  /// project(g) = l2_normalize(h^T g); g is [D] or [B x D]. Raises
  /// NumericError if the mapped vector has zero norm.
  Tensor project(const Tensor& g) const;
};

ProjectionHead make_head(int embedding_dim, int shared_dim, std::uint64_t seed);

/// FLOPs for one forward pass, from layer shapes. A multiply-accumulate
/// counts as 2 FLOPs; relu counts 1 per element; crops and reshapes are
/// free.
std::int64_t count_flops(const Architecture& arch);

/// Classifier plus its head and inference cost (backbone only; the head is
/// a training-time artifact).
struct CostedModel {
  ClassifierModel model;
  ProjectionHead head;
  std::int64_t flops = 0;
};

CostedModel make_costed_model(const Architecture& arch, int shared_dim, std::uint64_t seed);

}  // namespace mux
