#pragma once

#include <cstdint>
#include <vector>

#include "mux/model.hpp"
#include "mux/multiplexer.hpp"

namespace mux {

struct RoutePolicy {
  enum class Mode { Single, Ensemble, BinaryOffload };
  Mode mode = Mode::Single;
  double threshold = 0.288;          // ensemble selection cutoff (strictly >)
  double offload_threshold = 0.5;    // cloud iff w_cloud > this
  /// Ensemble averaging: uniform mean of the selected models by default;
  /// optionally re-weighted by their (renormalized) mux weights.
  bool weighted_average = false;
};

struct RouteDecision {
  std::vector<int> selected;  // model indices, never empty
  Tensor probs;               // final class-probability vector
  std::int64_t flops = 0;     // mux + selected backbones
};

/// argmax over weights; ties break toward the lower-cost model, then the
/// lower index.
int select_single(const Tensor& w, const std::vector<double>& costs);

/// Indices with w_i > T; falls back to the plain argmax when none qualify.
std::vector<int> select_ensemble(const Tensor& w, double threshold);

/// Binary offload: true (cloud) iff w_cloud > 0.5; exactly 0.5 stays local.
bool offload_decision(double w_cloud, double threshold = 0.5);

/// Holds the loaded zoo and counts forward executions per model, which lets
/// tests verify that unselected models never run.
class ModelBank {
 public:
  explicit ModelBank(std::vector<CostedModel> models);

  int size() const { return static_cast<int>(models_.size()); }
  const CostedModel& at(int i) const { return models_[static_cast<std::size_t>(i)]; }
  std::vector<double> flops_costs() const;

  /// Runs model i, bumping its execution counter.
  std::pair<Tensor, Tensor> forward(int i, const Tensor& x) const;

  const std::vector<std::int64_t>& call_counts() const { return calls_; }
  void reset_counts() const;

 private:
  std::vector<CostedModel> models_;
  mutable std::vector<std::int64_t> calls_;
};

/// Runs the multiplexer once, selects models per the policy, executes only
/// those, and averages their probability vectors. For BinaryOffload the
/// higher-cost model is treated as the cloud side.
RouteDecision route_and_predict(const Tensor& x, const ModelBank& bank, const MuxNet& mux,
                                const RoutePolicy& policy);

}  // namespace mux
