#include "mux/router.hpp"

#include <algorithm>

#include "mux/errors.hpp"

namespace mux {

int select_single(const Tensor& w, const std::vector<double>& costs) {
  if (w.rank() != 1 || w.dim(0) == 0) throw NumericError("select_single: empty weight vector");
  if (!costs.empty() && costs.size() != w.data.size()) throw NumericError("select_single: cost count mismatch");
  int best = 0;
  for (int i = 1; i < w.dim(0); ++i) {
    const float wi = w.data[static_cast<std::size_t>(i)];
    const float wb = w.data[static_cast<std::size_t>(best)];
    if (wi > wb) {
      best = i;
    } else if (wi == wb && !costs.empty() && costs[static_cast<std::size_t>(i)] < costs[static_cast<std::size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

std::vector<int> select_ensemble(const Tensor& w, double threshold) {
  if (w.rank() != 1 || w.dim(0) == 0) throw NumericError("select_ensemble: empty weight vector");
  if (!(threshold > 0.0 && threshold < 1.0)) throw NumericError("select_ensemble: threshold must be in (0, 1)");
  std::vector<int> s;
  for (int i = 0; i < w.dim(0); ++i) {
    if (static_cast<double>(w.data[static_cast<std::size_t>(i)]) > threshold) s.push_back(i);
  }
  if (s.empty()) s.push_back(argmax(w.data.data(), w.dim(0)));
  return s;
}

bool offload_decision(double w_cloud, double threshold) {
  if (w_cloud < 0.0 || w_cloud > 1.0) throw NumericError("offload_decision: weight outside [0, 1]");
  return w_cloud > threshold;
}

ModelBank::ModelBank(std::vector<CostedModel> models)
    : models_(std::move(models)), calls_(models_.size(), 0) {
  if (models_.empty()) throw ConfigError("ModelBank needs at least one model");
  const int classes = models_[0].model.class_count();
  for (const CostedModel& m : models_) {
    if (m.model.class_count() != classes) throw ConfigError("ModelBank: class counts disagree");
  }
}

std::vector<double> ModelBank::flops_costs() const {
  std::vector<double> c;
  c.reserve(models_.size());
  for (const CostedModel& m : models_) c.push_back(static_cast<double>(m.flops));
  return c;
}

std::pair<Tensor, Tensor> ModelBank::forward(int i, const Tensor& x) const {
  if (i < 0 || i >= size()) throw NumericError("ModelBank: model index out of range");
  ++calls_[static_cast<std::size_t>(i)];
  return models_[static_cast<std::size_t>(i)].model.forward(x);
}

void ModelBank::reset_counts() const {
  std::fill(calls_.begin(), calls_.end(), 0);
}

RouteDecision route_and_predict(const Tensor& x, const ModelBank& bank, const MuxNet& mux,
                                const RoutePolicy& policy) {
  if (bank.size() != mux.n_models()) {
    throw ConfigError("route_and_predict: bank has " + std::to_string(bank.size()) +
                      " models but mux expects " + std::to_string(mux.n_models()));
  }
  const MuxOutput out = mux_forward(mux, x);
  const Tensor& w = out.weights;
  const std::vector<double> costs = bank.flops_costs();

  RouteDecision dec;
  switch (policy.mode) {
    case RoutePolicy::Mode::Single:
      dec.selected = {select_single(w, costs)};
      break;
    case RoutePolicy::Mode::Ensemble:
      dec.selected = select_ensemble(w, policy.threshold);
      break;
    case RoutePolicy::Mode::BinaryOffload: {
      if (bank.size() != 2) throw ConfigError("binary offload needs exactly two models");
      const int cloud = costs[0] >= costs[1] ? 0 : 1;
      const int local = 1 - cloud;
      const bool go_cloud = offload_decision(w.data[static_cast<std::size_t>(cloud)], policy.offload_threshold);
      dec.selected = {go_cloud ? cloud : local};
      break;
    }
  }

  const int classes = bank.at(0).model.class_count();
  Tensor mixed({classes});
  double wsum = 0.0;
  for (int s : dec.selected) wsum += w.data[static_cast<std::size_t>(s)];
  for (int s : dec.selected) {
    auto [logits, emb] = bank.forward(s, x);
    const Tensor p = softmax(logits);
    const double scale = policy.weighted_average && wsum > 0.0
                             ? w.data[static_cast<std::size_t>(s)] / wsum
                             : 1.0 / static_cast<double>(dec.selected.size());
    for (int k = 0; k < classes; ++k) mixed.data[static_cast<std::size_t>(k)] += static_cast<float>(scale * p.data[static_cast<std::size_t>(k)]);
  }
  check_finite(mixed, "route_and_predict");
  dec.probs = std::move(mixed);

  dec.flops = mux_flops(mux);
  for (int s : dec.selected) dec.flops += bank.at(s).flops;
  return dec;
}

}  // namespace mux
