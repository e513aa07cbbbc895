#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mux {

/// Dense n-dimensional array of 32-bit floats, row-major.
/// Shapes are explicit and never broadcast implicitly; dot-product style
/// accumulations run in double and are truncated back to float.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f);

  static Tensor from(std::vector<int> s, std::vector<float> d);
  static Tensor scalar(float v);
  static Tensor zeros_like(const Tensor& t);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  float& at(int r, int c);
  float at(int r, int c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

/// Throws NumericError if any element of t is NaN or infinite.
void check_finite(const Tensor& t, const char* context);

// ---- forward kernels ----------------------------------------------------
// All kernels are pure and deterministic: fixed left-to-right summation
// order, double accumulators, no threading.

/// Matrix product of a [r x k] and b [k x c].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid (no padding) 2-D convolution. x is [C x H x W] or [B x C x H x W],
/// kernels is [F x C x kh x kw]; output spatial dims are
/// floor((H - kh) / stride) + 1 by floor((W - kw) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride);

Tensor relu(const Tensor& x);

/// Softmax over the final axis; each row sums to 1.
Tensor softmax(const Tensor& x);

/// L2-normalizes along the final axis. Rows with (near-)zero norm raise
/// NumericError instead of emitting NaN.
Tensor l2_normalize(const Tensor& x);

/// Cross-entropy -log(softmax(logits)[label]) for a single logit vector,
/// computed via log-sum-exp.
double cross_entropy(const Tensor& logits, int label);

int argmax(const float* v, int n);

}  // namespace mux
