#include "mux/autograd.hpp"

#include <atomic>
#include <cmath>

#include "mux/errors.hpp"

namespace mux {

namespace {

std::atomic<std::uint64_t> g_tape_counter{1};

}  // namespace

GradTape::GradTape() : id_(g_tape_counter.fetch_add(1)) {}

int GradTape::check(Var v) const {
  if (v.tape != id_ || v.node < 0 || v.node >= static_cast<int>(nodes_.size())) {
    throw NumericError("Var does not belong to this tape");
  }
  return v.node;
}

const GradTape::Node& GradTape::node(Var v) const { return nodes_[static_cast<std::size_t>(check(v))]; }

const Tensor& GradTape::value(Var v) const { return node(v).value; }

Var GradTape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1, id_};
}

Var GradTape::leaf(Tensor value) {
  check_finite(value, "leaf");
  return push(Node{Op::Leaf, -1, -1, std::move(value), {}, {}, {}});
}

Var GradTape::constant(Tensor value) {
  check_finite(value, "constant");
  return push(Node{Op::Const, -1, -1, std::move(value), {}, {}, {}});
}

Var GradTape::matmul(Var a, Var b) {
  Node n{Op::MatMul, check(a), check(b), mux::matmul(value(a), value(b)), {}, {}, {}};
  return push(std::move(n));
}

Var GradTape::transpose(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw NumericError("transpose expects a rank-2 tensor");
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  }
  return push(Node{Op::Transpose, check(x), -1, std::move(out), {}, {}, {}});
}

Var GradTape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (!x.same_shape(y)) throw NumericError("add shape mismatch: " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
  check_finite(out, "add");
  return push(Node{Op::Add, check(a), check(b), std::move(out), {}, {}, {}});
}

Var GradTape::add_bias(Var x, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw NumericError("add_bias expects [B x N] and [N], got " + xv.shape_str() + " and " + bv.shape_str());
  }
  Tensor out = xv;
  const int B = xv.dim(0), N = xv.dim(1);
  for (int r = 0; r < B; ++r) {
    for (int c = 0; c < N; ++c) out.at(r, c) += bv.data[static_cast<std::size_t>(c)];
  }
  check_finite(out, "add_bias");
  return push(Node{Op::AddBias, check(x), check(bias), std::move(out), {}, {}, {}});
}

Var GradTape::add_channel_bias(Var x, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw NumericError("add_channel_bias expects [B x F x H x W] and [F]");
  }
  Tensor out = xv;
  const int B = xv.dim(0), F = xv.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  for (int b = 0; b < B; ++b) {
    for (int f = 0; f < F; ++f) {
      float* p = out.data.data() + (static_cast<std::size_t>(b) * F + f) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += bv.data[static_cast<std::size_t>(f)];
    }
  }
  check_finite(out, "add_channel_bias");
  return push(Node{Op::AddChannelBias, check(x), check(bias), std::move(out), {}, {}, {}});
}

Var GradTape::relu(Var x) {
  return push(Node{Op::Relu, check(x), -1, mux::relu(value(x)), {}, {}, {}});
}

Var GradTape::conv2d(Var x, Var kernels, int stride) {
  Node n{Op::Conv2d, check(x), check(kernels), mux::conv2d(value(x), value(kernels), stride), {}, {}, {}};
  n.i0 = stride;
  return push(std::move(n));
}

Var GradTape::slice_rows(Var x, int r0, int r1) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw NumericError("slice_rows expects [B x C x H x W]");
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (r0 < 0 || r1 > H || r0 >= r1) throw NumericError("slice_rows range invalid");
  Tensor out({B, C, r1 - r0, W});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      for (int h = r0; h < r1; ++h) {
        const float* src = xv.data.data() + ((static_cast<std::size_t>(b) * C + c) * H + h) * W;
        float* dst = out.data.data() + ((static_cast<std::size_t>(b) * C + c) * (r1 - r0) + (h - r0)) * W;
        for (int w = 0; w < W; ++w) dst[w] = src[w];
      }
    }
  }
  Node n{Op::SliceRows, check(x), -1, std::move(out), {}, {}, {}};
  n.i0 = r0;
  n.i1 = r1;
  return push(std::move(n));
}

Var GradTape::flatten(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() < 2) throw NumericError("flatten expects rank >= 2");
  Tensor out = xv;
  out.shape = {xv.dim(0), static_cast<int>(xv.size() / xv.dim(0))};
  return push(Node{Op::Flatten, check(x), -1, std::move(out), {}, {}, {}});
}

Var GradTape::softmax(Var x) {
  return push(Node{Op::Softmax, check(x), -1, mux::softmax(value(x)), {}, {}, {}});
}

Var GradTape::softmax_xent(Var logits, std::vector<int> labels) {
  const Tensor& lv = value(logits);
  if (lv.rank() != 2 || static_cast<int>(labels.size()) != lv.dim(0)) {
    throw NumericError("softmax_xent expects [B x K] logits and B labels");
  }
  const int B = lv.dim(0), K = lv.dim(1);
  Tensor probs = mux::softmax(lv);
  Tensor out({B});
  for (int b = 0; b < B; ++b) {
    if (labels[static_cast<std::size_t>(b)] < 0 || labels[static_cast<std::size_t>(b)] >= K) {
      throw NumericError("softmax_xent label out of range");
    }
    Tensor row = Tensor::from({K}, std::vector<float>(lv.data.begin() + static_cast<std::size_t>(b) * K,
                                                      lv.data.begin() + static_cast<std::size_t>(b + 1) * K));
    out.data[static_cast<std::size_t>(b)] = static_cast<float>(mux::cross_entropy(row, labels[static_cast<std::size_t>(b)]));
  }
  Node n{Op::SoftmaxXent, check(logits), -1, std::move(out), std::move(probs), {}, std::move(labels)};
  return push(std::move(n));
}

Var GradTape::nll_rows(Var probs, std::vector<int> labels, float eps) {
  const Tensor& pv = value(probs);
  if (pv.rank() != 2 || static_cast<int>(labels.size()) != pv.dim(0)) {
    throw NumericError("nll_rows expects [B x K] probabilities and B labels");
  }
  const int B = pv.dim(0), K = pv.dim(1);
  Tensor out({B});
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= K) throw NumericError("nll_rows label out of range");
    out.data[static_cast<std::size_t>(b)] = -std::log(pv.at(b, y) + eps);
  }
  check_finite(out, "nll_rows");
  Node n{Op::NllRows, check(probs), -1, std::move(out), {}, {}, std::move(labels)};
  n.f0 = eps;
  return push(std::move(n));
}

Var GradTape::weighted_mix(Var w, std::vector<Tensor> probs) {
  const Tensor& wv = value(w);
  if (wv.rank() != 2) throw NumericError("weighted_mix expects [B x N] weights");
  const int B = wv.dim(0), N = wv.dim(1);
  if (static_cast<int>(probs.size()) != N) throw NumericError("weighted_mix needs one probability tensor per model");
  const int K = probs[0].dim(1);
  for (const Tensor& p : probs) {
    if (p.rank() != 2 || p.dim(0) != B || p.dim(1) != K) {
      throw NumericError("weighted_mix class-count mismatch across models");
    }
  }
  Tensor out({B, K});
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int i = 0; i < N; ++i) acc += static_cast<double>(wv.at(b, i)) * probs[static_cast<std::size_t>(i)].at(b, k);
      out.at(b, k) = static_cast<float>(acc);
    }
  }
  check_finite(out, "weighted_mix");
  Node n{Op::WeightedMix, check(w), -1, std::move(out), {}, std::move(probs), {}};
  return push(std::move(n));
}

Var GradTape::row_dot(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv) || av.rank() != 2) throw NumericError("row_dot expects matching [B x S] tensors");
  const int B = av.dim(0), S = av.dim(1);
  Tensor out({B});
  for (int r = 0; r < B; ++r) {
    double acc = 0.0;
    for (int s = 0; s < S; ++s) acc += static_cast<double>(av.at(r, s)) * bv.at(r, s);
    out.data[static_cast<std::size_t>(r)] = static_cast<float>(acc);
  }
  return push(Node{Op::RowDot, check(a), check(b), std::move(out), {}, {}, {}});
}

Var GradTape::row_dot_const(Var a, Tensor c) {
  const Tensor& av = value(a);
  if (!av.same_shape(c) || av.rank() != 2) throw NumericError("row_dot_const expects matching [B x S] tensors");
  const int B = av.dim(0), S = av.dim(1);
  Tensor out({B});
  for (int r = 0; r < B; ++r) {
    double acc = 0.0;
    for (int s = 0; s < S; ++s) acc += static_cast<double>(av.at(r, s)) * c.at(r, s);
    out.data[static_cast<std::size_t>(r)] = static_cast<float>(acc);
  }
  Node n{Op::RowDotConst, check(a), -1, std::move(out), std::move(c), {}, {}};
  return push(std::move(n));
}

Var GradTape::l2_normalize_rows(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw NumericError("l2_normalize_rows expects [B x S]");
  const int B = xv.dim(0), S = xv.dim(1);
  Tensor out = xv;
  Tensor norms({B});
  for (int r = 0; r < B; ++r) {
    double sq = 0.0;
    for (int s = 0; s < S; ++s) sq += static_cast<double>(xv.at(r, s)) * xv.at(r, s);
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw NumericError("l2_normalize_rows: degenerate zero-norm row");
    norms.data[static_cast<std::size_t>(r)] = static_cast<float>(norm);
    for (int s = 0; s < S; ++s) out.at(r, s) = static_cast<float>(xv.at(r, s) / norm);
  }
  Node n{Op::L2NormRows, check(x), -1, std::move(out), std::move(norms), {}, {}};
  return push(std::move(n));
}

Var GradTape::mul_row_const(Var x, Tensor row) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2 || row.rank() != 1 || row.dim(0) != xv.dim(1)) {
    throw NumericError("mul_row_const expects [B x N] and [N]");
  }
  Tensor out = xv;
  const int B = xv.dim(0), N = xv.dim(1);
  for (int r = 0; r < B; ++r) {
    for (int c = 0; c < N; ++c) out.at(r, c) *= row.data[static_cast<std::size_t>(c)];
  }
  check_finite(out, "mul_row_const");
  Node n{Op::MulRowConst, check(x), -1, std::move(out), std::move(row), {}, {}};
  return push(std::move(n));
}

Var GradTape::mul_const(Var x, Tensor c) {
  const Tensor& xv = value(x);
  if (!xv.same_shape(c)) throw NumericError("mul_const shape mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= c.data[i];
  check_finite(out, "mul_const");
  Node n{Op::MulConst, check(x), -1, std::move(out), std::move(c), {}, {}};
  return push(std::move(n));
}

Var GradTape::affine(Var x, float scale, float shift) {
  Tensor out = value(x);
  for (float& v : out.data) v = scale * v + shift;
  check_finite(out, "affine");
  Node n{Op::Affine, check(x), -1, std::move(out), {}, {}, {}};
  n.f0 = scale;
  n.f1 = shift;
  return push(std::move(n));
}

Var GradTape::log_clamp(Var x, float lo, float hi) {
  if (!(lo > 0.0f) || !(hi > lo)) throw NumericError("log_clamp needs 0 < lo < hi");
  Tensor out = value(x);
  for (float& v : out.data) {
    const float c = v < lo ? lo : (v > hi ? hi : v);
    v = std::log(c);
  }
  Node n{Op::LogClamp, check(x), -1, std::move(out), {}, {}, {}};
  n.f0 = lo;
  n.f1 = hi;
  return push(std::move(n));
}

Var GradTape::sum(Var x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (float v : xv.data) acc += v;
  return push(Node{Op::Sum, check(x), -1, Tensor::scalar(static_cast<float>(acc)), {}, {}, {}});
}

Var GradTape::mean(Var x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (float v : xv.data) acc += v;
  return push(Node{Op::Mean, check(x), -1, Tensor::scalar(static_cast<float>(acc / static_cast<double>(xv.size()))), {}, {}, {}});
}

const Tensor& GradTape::Gradients::at(Var v) const {
  if (v.tape != tape_ || v.node < 0 || v.node >= static_cast<int>(grads_.size())) {
    throw NumericError("gradient lookup for Var from another tape");
  }
  return grads_[static_cast<std::size_t>(v.node)];
}

GradTape::Gradients GradTape::backward(Var loss) const {
  const int root = check(loss);
  if (nodes_[static_cast<std::size_t>(root)].value.size() != 1) {
    throw NumericError("backward requires a scalar loss");
  }
  std::vector<Tensor> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor::zeros_like(nodes_[i].value);
  grads[static_cast<std::size_t>(root)].data[0] = 1.0f;

  for (int idx = root; idx >= 0; --idx) {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    const Tensor& g = grads[static_cast<std::size_t>(idx)];
    bool any = false;
    for (float v : g.data) {
      if (v != 0.0f) { any = true; break; }
    }
    if (!any) continue;

    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::MatMul: {
        const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& b = nodes_[static_cast<std::size_t>(n.b)].value;
        Tensor& ga = grads[static_cast<std::size_t>(n.a)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        const int r = a.dim(0), k = a.dim(1), c = b.dim(1);
        // gA = G * B^T
        for (int i = 0; i < r; ++i) {
          for (int t = 0; t < k; ++t) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j) acc += static_cast<double>(g.at(i, j)) * b.at(t, j);
            ga.at(i, t) += static_cast<float>(acc);
          }
        }
        // gB = A^T * G
        for (int t = 0; t < k; ++t) {
          for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += static_cast<double>(a.at(i, t)) * g.at(i, j);
            gb.at(t, j) += static_cast<float>(acc);
          }
        }
        break;
      }
      case Op::Transpose: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int r = gx.dim(0), c = gx.dim(1);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) gx.at(i, j) += g.at(j, i);
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = grads[static_cast<std::size_t>(n.a)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::AddBias: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        const int B = n.value.dim(0), N = n.value.dim(1);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        for (int c = 0; c < N; ++c) {
          double acc = 0.0;
          for (int r = 0; r < B; ++r) acc += g.at(r, c);
          gb.data[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
        break;
      }
      case Op::AddChannelBias: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        const int B = n.value.dim(0), F = n.value.dim(1);
        const std::size_t plane = static_cast<std::size_t>(n.value.dim(2)) * n.value.dim(3);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int b = 0; b < B; ++b) {
            const float* p = g.data.data() + (static_cast<std::size_t>(b) * F + f) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          }
          gb.data[static_cast<std::size_t>(f)] += static_cast<float>(acc);
        }
        break;
      }
      case Op::Relu: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          if (x.data[i] > 0.0f) gx.data[i] += g.data[i];
        }
        break;
      }
      case Op::Conv2d: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& ker = nodes_[static_cast<std::size_t>(n.b)].value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        Tensor& gk = grads[static_cast<std::size_t>(n.b)];
        const int stride = n.i0;
        const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int F = ker.dim(0), kh = ker.dim(2), kw = ker.dim(3);
        const int OH = n.value.dim(2), OW = n.value.dim(3);
        const std::size_t in_plane = static_cast<std::size_t>(H) * W;
        const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
        const std::size_t ker_plane = static_cast<std::size_t>(kh) * kw;
        for (int b = 0; b < B; ++b) {
          for (int f = 0; f < F; ++f) {
            const float* gout = g.data.data() + (static_cast<std::size_t>(b) * F + f) * out_plane;
            for (int oi = 0; oi < OH; ++oi) {
              for (int oj = 0; oj < OW; ++oj) {
                const float gv = gout[static_cast<std::size_t>(oi) * OW + oj];
                if (gv == 0.0f) continue;
                for (int c = 0; c < C; ++c) {
                  const float* xin = x.data.data() + (static_cast<std::size_t>(b) * C + c) * in_plane;
                  float* gxin = gx.data.data() + (static_cast<std::size_t>(b) * C + c) * in_plane;
                  const float* kin = ker.data.data() + (static_cast<std::size_t>(f) * C + c) * ker_plane;
                  float* gkin = gk.data.data() + (static_cast<std::size_t>(f) * C + c) * ker_plane;
                  for (int u = 0; u < kh; ++u) {
                    const std::size_t xoff = static_cast<std::size_t>(oi * stride + u) * W + oj * stride;
                    for (int v = 0; v < kw; ++v) {
                      gkin[static_cast<std::size_t>(u) * kw + v] += gv * xin[xoff + v];
                      gxin[xoff + v] += gv * kin[static_cast<std::size_t>(u) * kw + v];
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }
      case Op::SliceRows: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int r0 = n.i0, r1 = n.i1;
        for (int b = 0; b < B; ++b) {
          for (int c = 0; c < C; ++c) {
            for (int h = r0; h < r1; ++h) {
              const float* src = g.data.data() + ((static_cast<std::size_t>(b) * C + c) * (r1 - r0) + (h - r0)) * W;
              float* dst = gx.data.data() + ((static_cast<std::size_t>(b) * C + c) * H + h) * W;
              for (int w = 0; w < W; ++w) dst[w] += src[w];
            }
          }
        }
        break;
      }
      case Op::Flatten: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        break;
      }
      case Op::Softmax: {
        const Tensor& p = n.value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int K = p.dim(p.rank() - 1);
        const std::int64_t rows = p.size() / K;
        for (std::int64_t r = 0; r < rows; ++r) {
          const float* pr = p.data.data() + r * K;
          const float* gr = g.data.data() + r * K;
          double dot = 0.0;
          for (int i = 0; i < K; ++i) dot += static_cast<double>(gr[i]) * pr[i];
          float* gxr = gx.data.data() + r * K;
          for (int i = 0; i < K; ++i) gxr[i] += static_cast<float>(pr[i] * (gr[i] - dot));
        }
        break;
      }
      case Op::SoftmaxXent: {
        const Tensor& p = n.payload;  // saved softmax
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int B = p.dim(0), K = p.dim(1);
        for (int b = 0; b < B; ++b) {
          const float gb = g.data[static_cast<std::size_t>(b)];
          if (gb == 0.0f) continue;
          for (int k = 0; k < K; ++k) {
            const float onehot = k == n.labels[static_cast<std::size_t>(b)] ? 1.0f : 0.0f;
            gx.at(b, k) += gb * (p.at(b, k) - onehot);
          }
        }
        break;
      }
      case Op::NllRows: {
        const Tensor& p = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int B = p.dim(0);
        for (int b = 0; b < B; ++b) {
          const int y = n.labels[static_cast<std::size_t>(b)];
          gx.at(b, y) += -g.data[static_cast<std::size_t>(b)] / (p.at(b, y) + n.f0);
        }
        break;
      }
      case Op::WeightedMix: {
        Tensor& gw = grads[static_cast<std::size_t>(n.a)];
        const int B = n.value.dim(0), K = n.value.dim(1);
        const int N = static_cast<int>(n.mix.size());
        for (int b = 0; b < B; ++b) {
          for (int i = 0; i < N; ++i) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += static_cast<double>(g.at(b, k)) * n.mix[static_cast<std::size_t>(i)].at(b, k);
            gw.at(b, i) += static_cast<float>(acc);
          }
        }
        break;
      }
      case Op::RowDot: {
        const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& b = nodes_[static_cast<std::size_t>(n.b)].value;
        Tensor& ga = grads[static_cast<std::size_t>(n.a)];
        Tensor& gb = grads[static_cast<std::size_t>(n.b)];
        const int B = a.dim(0), S = a.dim(1);
        for (int r = 0; r < B; ++r) {
          const float gr = g.data[static_cast<std::size_t>(r)];
          if (gr == 0.0f) continue;
          for (int s = 0; s < S; ++s) {
            ga.at(r, s) += gr * b.at(r, s);
            gb.at(r, s) += gr * a.at(r, s);
          }
        }
        break;
      }
      case Op::RowDotConst: {
        Tensor& ga = grads[static_cast<std::size_t>(n.a)];
        const int B = n.payload.dim(0), S = n.payload.dim(1);
        for (int r = 0; r < B; ++r) {
          const float gr = g.data[static_cast<std::size_t>(r)];
          if (gr == 0.0f) continue;
          for (int s = 0; s < S; ++s) ga.at(r, s) += gr * n.payload.at(r, s);
        }
        break;
      }
      case Op::L2NormRows: {
        const Tensor& e = n.value;
        const Tensor& norms = n.payload;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int B = e.dim(0), S = e.dim(1);
        for (int r = 0; r < B; ++r) {
          double dot = 0.0;
          for (int s = 0; s < S; ++s) dot += static_cast<double>(g.at(r, s)) * e.at(r, s);
          const double inv = 1.0 / norms.data[static_cast<std::size_t>(r)];
          for (int s = 0; s < S; ++s) {
            gx.at(r, s) += static_cast<float>((g.at(r, s) - dot * e.at(r, s)) * inv);
          }
        }
        break;
      }
      case Op::MulRowConst: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const int B = n.value.dim(0), N = n.value.dim(1);
        for (int r = 0; r < B; ++r) {
          for (int c = 0; c < N; ++c) gx.at(r, c) += g.at(r, c) * n.payload.data[static_cast<std::size_t>(c)];
        }
        break;
      }
      case Op::MulConst: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * n.payload.data[i];
        break;
      }
      case Op::Affine: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * n.f0;
        break;
      }
      case Op::LogClamp: {
        const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const float v = x.data[i];
          if (v > n.f0 && v < n.f1) gx.data[i] += g.data[i] / v;
        }
        break;
      }
      case Op::Sum: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const float gv = g.data[0];
        for (float& v : gx.data) v += gv;
        break;
      }
      case Op::Mean: {
        Tensor& gx = grads[static_cast<std::size_t>(n.a)];
        const float gv = g.data[0] / static_cast<float>(gx.size());
        for (float& v : gx.data) v += gv;
        break;
      }
    }
  }
  return Gradients(std::move(grads), id_);
}

void sgd_step(Tensor& param, const Tensor& grad, float alpha) {
  if (!(alpha > 0.0f)) throw NumericError("sgd_step requires alpha > 0");
  if (!param.same_shape(grad)) {
    throw NumericError("sgd_step shape mismatch: " + param.shape_str() + " vs " + grad.shape_str());
  }
  for (std::size_t i = 0; i < param.data.size(); ++i) param.data[i] -= alpha * grad.data[i];
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, float alpha) {
  if (params.size() != grads.size()) throw NumericError("sgd_step parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) sgd_step(params[i], grads[i], alpha);
}

}  // namespace mux
