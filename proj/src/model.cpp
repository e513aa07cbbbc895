#include "mux/model.hpp"

#include <cmath>

#include <json.hpp>

#include "mux/errors.hpp"

namespace mux {

using nlohmann::json;

LayerDesc LayerDesc::dense(int in, int out) {
  LayerDesc l;
  l.type = Type::Dense;
  l.in = in;
  l.out = out;
  return l;
}

LayerDesc LayerDesc::relu() {
  LayerDesc l;
  l.type = Type::Relu;
  return l;
}

LayerDesc LayerDesc::conv(int in_ch, int out_ch, int kh, int kw, int stride) {
  LayerDesc l;
  l.type = Type::Conv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kh = kh;
  l.kw = kw;
  l.stride = stride;
  return l;
}

LayerDesc LayerDesc::crop_rows(int r0, int r1) {
  LayerDesc l;
  l.type = Type::CropRows;
  l.r0 = r0;
  l.r1 = r1;
  return l;
}

LayerDesc LayerDesc::flatten() {
  LayerDesc l;
  l.type = Type::Flatten;
  return l;
}

std::vector<int> Architecture::output_shape() const {
  if (input_shape.size() != 3) throw ConfigError("architecture '" + id + "': input shape must be [C, H, W]");
  std::vector<int> s = input_shape;  // spatial: {C,H,W}; flat: {D}
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerDesc& l = layers[li];
    const std::string where = "architecture '" + id + "' layer " + std::to_string(li);
    switch (l.type) {
      case LayerDesc::Type::CropRows:
        if (s.size() != 3) throw ConfigError(where + ": crop_rows needs a spatial input");
        if (l.r0 < 0 || l.r1 > s[1] || l.r0 >= l.r1) throw ConfigError(where + ": crop range out of bounds");
        s[1] = l.r1 - l.r0;
        break;
      case LayerDesc::Type::Conv: {
        if (s.size() != 3) throw ConfigError(where + ": conv needs a spatial input");
        if (l.in_ch != s[0]) throw ConfigError(where + ": conv expects " + std::to_string(l.in_ch) + " channels, input has " + std::to_string(s[0]));
        if (l.kh > s[1] || l.kw > s[2]) throw ConfigError(where + ": kernel larger than input");
        if (l.stride < 1) throw ConfigError(where + ": stride must be >= 1");
        s = {l.out_ch, (s[1] - l.kh) / l.stride + 1, (s[2] - l.kw) / l.stride + 1};
        break;
      }
      case LayerDesc::Type::Flatten: {
        if (s.size() != 3) throw ConfigError(where + ": flatten needs a spatial input");
        s = {s[0] * s[1] * s[2]};
        break;
      }
      case LayerDesc::Type::Dense:
        if (s.size() != 1) throw ConfigError(where + ": dense needs a flattened input");
        if (l.in != s[0]) throw ConfigError(where + ": dense expects width " + std::to_string(l.in) + ", input has " + std::to_string(s[0]));
        if (l.out <= 0) throw ConfigError(where + ": dense output width must be positive");
        s = {l.out};
        break;
      case LayerDesc::Type::Relu:
        break;
    }
  }
  if (classes > 0) {
    if (layers.empty() || layers.back().type != LayerDesc::Type::Dense || layers.back().out != classes) {
      throw ConfigError("architecture '" + id + "': classifier must end in a dense layer with " + std::to_string(classes) + " outputs");
    }
  }
  return s;
}

std::string Architecture::to_json() const {
  json j;
  j["id"] = id;
  j["input"] = input_shape;
  j["classes"] = classes;
  json jl = json::array();
  for (const LayerDesc& l : layers) {
    switch (l.type) {
      case LayerDesc::Type::Dense:
        jl.push_back({{"type", "dense"}, {"in", l.in}, {"out", l.out}});
        break;
      case LayerDesc::Type::Relu:
        jl.push_back({{"type", "relu"}});
        break;
      case LayerDesc::Type::Conv:
        jl.push_back({{"type", "conv"}, {"in_ch", l.in_ch}, {"out_ch", l.out_ch}, {"kh", l.kh}, {"kw", l.kw}, {"stride", l.stride}});
        break;
      case LayerDesc::Type::CropRows:
        jl.push_back({{"type", "crop_rows"}, {"r0", l.r0}, {"r1", l.r1}});
        break;
      case LayerDesc::Type::Flatten:
        jl.push_back({{"type", "flatten"}});
        break;
    }
  }
  j["layers"] = std::move(jl);
  return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad architecture JSON: ") + e.what());
  }
  Architecture a;
  try {
    a.id = j.at("id").get<std::string>();
    a.input_shape = j.at("input").get<std::vector<int>>();
    a.classes = j.at("classes").get<int>();
    for (const json& jl : j.at("layers")) {
      const std::string t = jl.at("type").get<std::string>();
      if (t == "dense") {
        a.layers.push_back(LayerDesc::dense(jl.at("in").get<int>(), jl.at("out").get<int>()));
      } else if (t == "relu") {
        a.layers.push_back(LayerDesc::relu());
      } else if (t == "conv") {
        a.layers.push_back(LayerDesc::conv(jl.at("in_ch").get<int>(), jl.at("out_ch").get<int>(),
                                           jl.at("kh").get<int>(), jl.at("kw").get<int>(), jl.at("stride").get<int>()));
      } else if (t == "crop_rows") {
        a.layers.push_back(LayerDesc::crop_rows(jl.at("r0").get<int>(), jl.at("r1").get<int>()));
      } else if (t == "flatten") {
        a.layers.push_back(LayerDesc::flatten());
      } else {
        throw ConfigError("unknown layer type '" + t + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad architecture JSON: ") + e.what());
  }
  a.output_shape();  // validate
  return a;
}

std::vector<Tensor> init_params(const Architecture& arch, Rng& rng) {
  arch.output_shape();
  std::vector<Tensor> params;
  for (const LayerDesc& l : arch.layers) {
    if (l.type == LayerDesc::Type::Dense) {
      const float std = std::sqrt(2.0f / static_cast<float>(l.in));
      Tensor w({l.in, l.out});
      for (float& v : w.data) v = rng.normal(0.0f, std);
      params.push_back(std::move(w));
      params.push_back(Tensor({l.out}));
    } else if (l.type == LayerDesc::Type::Conv) {
      const float std = std::sqrt(2.0f / static_cast<float>(l.in_ch * l.kh * l.kw));
      Tensor k({l.out_ch, l.in_ch, l.kh, l.kw});
      for (float& v : k.data) v = rng.normal(0.0f, std);
      params.push_back(std::move(k));
      params.push_back(Tensor({l.out_ch}));
    }
  }
  return params;
}

Var forward_taped(GradTape& tape, const Architecture& arch, const std::vector<Tensor>& params,
                  Var input, std::vector<Var>* param_vars, Var* embedding_out) {
  Var x = input;
  std::size_t pi = 0;
  Var embedding{};
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerDesc& l = arch.layers[li];
    const bool is_final_dense = arch.classes > 0 && li + 1 == arch.layers.size();
    if (is_final_dense && embedding_out) embedding = x;
    switch (l.type) {
      case LayerDesc::Type::CropRows:
        x = tape.slice_rows(x, l.r0, l.r1);
        break;
      case LayerDesc::Type::Conv: {
        Var k = tape.leaf(params.at(pi));
        Var b = tape.leaf(params.at(pi + 1));
        if (param_vars) {
          param_vars->push_back(k);
          param_vars->push_back(b);
        }
        pi += 2;
        x = tape.add_channel_bias(tape.conv2d(x, k, l.stride), b);
        break;
      }
      case LayerDesc::Type::Flatten:
        x = tape.flatten(x);
        break;
      case LayerDesc::Type::Dense: {
        Var w = tape.leaf(params.at(pi));
        Var b = tape.leaf(params.at(pi + 1));
        if (param_vars) {
          param_vars->push_back(w);
          param_vars->push_back(b);
        }
        pi += 2;
        x = tape.add_bias(tape.matmul(x, w), b);
        break;
      }
      case LayerDesc::Type::Relu:
        x = tape.relu(x);
        break;
    }
  }
  if (pi != params.size()) throw ConfigError("architecture '" + arch.id + "': parameter count mismatch");
  if (embedding_out) *embedding_out = embedding;
  return x;
}

Tensor forward_pure(const Architecture& arch, const std::vector<Tensor>& params,
                    const Tensor& input, Tensor* embedding_out) {
  GradTape tape;
  Var x = tape.constant(input);
  Var emb{};
  Var out = forward_taped(tape, arch, params, x, nullptr, embedding_out ? &emb : nullptr);
  if (embedding_out) *embedding_out = tape.value(emb);
  return tape.value(out);
}

int ClassifierModel::embedding_dim() const {
  if (arch.layers.empty() || arch.layers.back().type != LayerDesc::Type::Dense) {
    throw ConfigError("classifier '" + arch.id + "' has no final dense layer");
  }
  return arch.layers.back().in;
}

std::pair<Tensor, Tensor> ClassifierModel::forward(const Tensor& x) const {
  const bool batched = x.rank() == 4;
  Tensor in = x;
  if (!batched) {
    if (x.rank() != 3) throw NumericError("classifier input must be [C x H x W] or [B x C x H x W]");
    in.shape = {1, x.dim(0), x.dim(1), x.dim(2)};
  }
  if (in.dim(1) != arch.input_shape[0] || in.dim(2) != arch.input_shape[1] || in.dim(3) != arch.input_shape[2]) {
    throw NumericError("classifier '" + arch.id + "' input shape mismatch: got " + x.shape_str());
  }
  Tensor emb;
  Tensor logits = forward_pure(arch, params, in, &emb);
  if (!batched) {
    logits.shape = {logits.dim(1)};
    emb.shape = {emb.dim(1)};
  }
  return {std::move(logits), std::move(emb)};
}

ClassifierModel make_classifier(const Architecture& arch, std::uint64_t seed) {
  if (arch.classes <= 0) throw ConfigError("classifier '" + arch.id + "' needs a positive class count");
  arch.output_shape();
  Rng rng(seed);
  ClassifierModel m;
  m.arch = arch;
  m.params = init_params(arch, rng);
  return m;
}

Tensor ProjectionHead::project(const Tensor& g) const {
  const bool batched = g.rank() == 2;
  Tensor in = g;
  if (!batched) {
    if (g.rank() != 1) throw NumericError("project expects [D] or [B x D]");
    in.shape = {1, g.dim(0)};
  }
  if (in.dim(1) != weight.dim(0)) {
    throw NumericError("projection head expects embedding width " + std::to_string(weight.dim(0)) +
                       ", got " + std::to_string(in.dim(1)));
  }
  Tensor mapped = matmul(in, weight);
  Tensor e;
  try {
    e = l2_normalize(mapped);
  } catch (const NumericError&) {
    throw NumericError("degenerate projection: h^T g has zero norm");
  }
  if (!batched) e.shape = {e.dim(1)};
  return e;
}

ProjectionHead make_head(int embedding_dim, int shared_dim, std::uint64_t seed) {
  if (embedding_dim <= 0 || shared_dim <= 0) throw ConfigError("head dimensions must be positive");
  Rng rng(seed);
  ProjectionHead h;
  h.weight = Tensor({embedding_dim, shared_dim});
  const float std = std::sqrt(1.0f / static_cast<float>(embedding_dim));
  for (float& v : h.weight.data) v = rng.normal(0.0f, std);
  return h;
}

std::int64_t count_flops(const Architecture& arch) {
  if (arch.input_shape.size() != 3) throw ConfigError("architecture '" + arch.id + "': input shape must be [C, H, W]");
  std::vector<int> s = arch.input_shape;
  std::int64_t flops = 0;
  auto elements = [&s] {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  };
  for (const LayerDesc& l : arch.layers) {
    switch (l.type) {
      case LayerDesc::Type::CropRows:
        s[1] = l.r1 - l.r0;
        break;
      case LayerDesc::Type::Conv: {
        const int oh = (s[1] - l.kh) / l.stride + 1;
        const int ow = (s[2] - l.kw) / l.stride + 1;
        flops += 2LL * l.out_ch * l.in_ch * l.kh * l.kw * oh * ow;
        s = {l.out_ch, oh, ow};
        break;
      }
      case LayerDesc::Type::Flatten:
        s = {s[0] * s[1] * s[2]};
        break;
      case LayerDesc::Type::Dense:
        flops += 2LL * l.in * l.out;
        s = {l.out};
        break;
      case LayerDesc::Type::Relu:
        flops += elements();
        break;
    }
  }
  return flops;
}

CostedModel make_costed_model(const Architecture& arch, int shared_dim, std::uint64_t seed) {
  CostedModel cm;
  cm.model = make_classifier(arch, Rng::derive(seed, "backbone"));
  cm.head = make_head(cm.model.embedding_dim(), shared_dim, Rng::derive(seed, "head"));
  cm.flops = count_flops(arch);
  return cm;
}

}  // namespace mux
