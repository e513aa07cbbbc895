#include "mux/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mux/errors.hpp"

namespace mux {

namespace {

std::int64_t product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw NumericError("tensor dimension must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(product(shape)), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<float> d) {
  Tensor t;
  t.shape = std::move(s);
  if (product(t.shape) != static_cast<std::int64_t>(d.size())) {
    throw NumericError("tensor data length does not match shape");
  }
  t.data = std::move(d);
  return t;
}

Tensor Tensor::scalar(float v) { return from({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape); }

float& Tensor::at(int r, int c) {
  return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)];
}

float Tensor::at(int r, int c) const {
  return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)];
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(const Tensor& t, const char* context) {
  if (!t.all_finite()) {
    throw NumericError(std::string(context) + ": non-finite value in tensor " + t.shape_str());
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw NumericError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " + b.shape_str());
  }
  if (a.dim(1) != b.dim(0)) {
    throw NumericError("matmul inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  }
  const int r = a.dim(0), k = a.dim(1), c = b.dim(1);
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    const float* arow = a.data.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      const float* bcol = b.data.data() + j;
      for (int t = 0; t < k; ++t) acc += static_cast<double>(arow[t]) * static_cast<double>(bcol[static_cast<std::size_t>(t) * c]);
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  check_finite(out, "matmul");
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride) {
  if (stride < 1) throw NumericError("conv2d stride must be >= 1");
  if (kernels.rank() != 4) throw NumericError("conv2d kernels must be [F x C x kh x kw]");
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw NumericError("conv2d input must be [C x H x W] or [B x C x H x W]");

  const int B = batched ? x.dim(0) : 1;
  const int C = x.dim(batched ? 1 : 0);
  const int H = x.dim(batched ? 2 : 1);
  const int W = x.dim(batched ? 3 : 2);
  const int F = kernels.dim(0), KC = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (KC != C) throw NumericError("conv2d channel mismatch: input has " + std::to_string(C) + ", kernels expect " + std::to_string(KC));
  if (kh > H || kw > W) {
    throw NumericError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " larger than input " + std::to_string(H) + "x" + std::to_string(W));
  }
  const int OH = (H - kh) / stride + 1;
  const int OW = (W - kw) / stride + 1;

  Tensor out(batched ? std::vector<int>{B, F, OH, OW} : std::vector<int>{F, OH, OW});
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t in_sample = static_cast<std::size_t>(C) * in_plane;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  const std::size_t out_sample = static_cast<std::size_t>(F) * out_plane;
  const std::size_t ker_plane = static_cast<std::size_t>(kh) * kw;
  const std::size_t ker_filter = static_cast<std::size_t>(C) * ker_plane;

  for (int b = 0; b < B; ++b) {
    const float* xin = x.data.data() + static_cast<std::size_t>(b) * in_sample;
    float* xout = out.data.data() + static_cast<std::size_t>(b) * out_sample;
    for (int f = 0; f < F; ++f) {
      const float* ker = kernels.data.data() + static_cast<std::size_t>(f) * ker_filter;
      for (int oi = 0; oi < OH; ++oi) {
        for (int oj = 0; oj < OW; ++oj) {
          double acc = 0.0;
          for (int c = 0; c < C; ++c) {
            const float* plane = xin + c * in_plane;
            const float* kplane = ker + c * ker_plane;
            for (int u = 0; u < kh; ++u) {
              const float* row = plane + static_cast<std::size_t>(oi * stride + u) * W + oj * stride;
              const float* krow = kplane + static_cast<std::size_t>(u) * kw;
              for (int v = 0; v < kw; ++v) acc += static_cast<double>(row[v]) * static_cast<double>(krow[v]);
            }
          }
          xout[f * out_plane + static_cast<std::size_t>(oi) * OW + oj] = static_cast<float>(acc);
        }
      }
    }
  }
  check_finite(out, "conv2d");
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1) throw NumericError("softmax needs rank >= 1");
  const int n = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / n;
  Tensor out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    float* row = out.data.data() + r * n;
    float m = row[0];
    for (int i = 1; i < n; ++i) m = std::max(m, row[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = std::exp(static_cast<double>(row[i]) - m);
      row[i] = static_cast<float>(e);
      sum += e;
    }
    for (int i = 0; i < n; ++i) row[i] = static_cast<float>(row[i] / sum);
  }
  check_finite(out, "softmax");
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() < 1) throw NumericError("l2_normalize needs rank >= 1");
  const int n = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / n;
  Tensor out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    float* row = out.data.data() + r * n;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += static_cast<double>(row[i]) * row[i];
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw NumericError("l2_normalize: zero-norm input");
    for (int i = 0; i < n; ++i) row[i] = static_cast<float>(row[i] / norm);
  }
  return out;
}

double cross_entropy(const Tensor& logits, int label) {
  const int n = static_cast<int>(logits.size());
  if (label < 0 || label >= n) {
    throw NumericError("cross_entropy label " + std::to_string(label) + " out of range [0," + std::to_string(n) + ")");
  }
  double m = logits.data[0];
  for (int i = 1; i < n; ++i) m = std::max(m, static_cast<double>(logits.data[i]));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits.data[i]) - m);
  const double loss = m + std::log(sum) - static_cast<double>(logits.data[label]);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  return loss;
}

int argmax(const float* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace mux
