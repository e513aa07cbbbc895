#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mux/dataset.hpp"
#include "mux/router.hpp"

namespace mux {

/// One cost bundle. Latency and energy follow the same composition rules;
/// energy entries are the mobile device's share (cloud compute energy is
/// attributed to the cloud and shows up as 0 mobile energy).
struct CostTerms {
  double latency_ms = 0.0;
  double energy_mj = 0.0;
  double flops = 0.0;

  CostTerms operator+(const CostTerms& o) const { return {latency_ms + o.latency_ms, energy_mj + o.energy_mj, flops + o.flops}; }
  CostTerms operator*(double k) const { return {latency_ms * k, energy_mj * k, flops * k}; }
};

struct CostProfile {
  CostTerms mobile_compute;
  CostTerms cloud_compute;
  CostTerms mux;
  CostTerms upload;
  CostTerms download;
  std::vector<CostTerms> cloud_models;  // per-model costs for cloud multiplexing
};

/// Knobs for deriving a profile from model FLOPs and network rates.
struct CostConfig {
  std::string profile = "derived";  // "derived" or "published"
  double device_gflops = 2.0;
  double cloud_gflops = 50.0;
  double uplink_mbps = 10.0;
  double downlink_mbps = 40.0;
  double payload_bytes = 0.0;  // 0 derives from the input tensor (f32 bytes)
  double download_bytes = 256.0;
  double radio_power_mw = 800.0;
  double mobile_mj_per_gflop = 40.0;
};

// Scenario cost composition. Latency, mobile energy and FLOPs all compose
// additively along each path.
CostTerms cost_mobile_only(const CostProfile& p);
CostTerms cost_cloud_only(const CostProfile& p);
CostTerms cost_hybrid_local(const CostProfile& p);
CostTerms cost_hybrid_cloud(const CostProfile& p);
CostTerms cost_hybrid(const CostProfile& p, double fraction_local);
CostTerms cost_cloud_hybrid(const std::vector<CostTerms>& model_costs, const std::vector<double>& called);

/// Builds a profile from actual model/mux FLOPs plus network constants.
/// mobile_idx / cloud_idx pick which zoo members play those roles.
CostProfile derive_profile(const CostConfig& cfg, const ModelBank& bank, const MuxNet& mux,
                           int mobile_idx, int cloud_idx, double input_bytes);

// ---- published-measurement replay ----------------------------------------

inline constexpr double kPublishedFractionLocal = 0.68;
inline constexpr double kPublishedHybridLatencyMs = 10.12;
inline constexpr double kPublishedHybridEnergyMj = 55.36;
inline constexpr double kPublishedHybridFlops = 5.75e9;
inline constexpr double kPublishedLargestFlops = 16.4e9;

/// Mobile/cloud cost constants as printed (Table I), with the multiplexer
/// cost back-solved so the printed hybrid row is reproduced exactly. The
/// back-solve lands on a mux costing almost exactly the mobile model
/// (3.5276 ms, 12 mJ, 0.2987 GFLOPs), consistent with the description of a
/// mobile-scale multiplexer.
CostProfile published_mobile_cloud_profile();

struct Table2Row {
  std::string name;
  double flops = 0.0;
  double latency_ms = 0.0;
  double accuracy = 0.0;
  double called = 0.0;  // fraction, not percent
};

/// The six-model benchmark table (Table II): FLOPs, latency and the
/// fraction of inputs routed to each model.
const std::vector<Table2Row>& published_benchmark_table();

struct Table1Replay {
  CostTerms mobile, cloud_only, hybrid_local, hybrid_cloud, hybrid;
  double fraction_local = kPublishedFractionLocal;
  double identity_residual = 0.0;  // max |hybrid - affine combination| over metrics
};

Table1Replay replay_table1();

struct Table2Replay {
  double expected_flops = 0.0;          // dot(called, flops)
  double printed_flops = kPublishedHybridFlops;
  double discrepancy_pct = 0.0;
  double saving_factor_printed = 0.0;   // largest / printed
  double saving_factor_recomputed = 0.0;
  std::string note;
};

Table2Replay replay_table2();

// ---- scenario evaluation --------------------------------------------------

enum class Scenario { MobileOnly, CloudOnly, Hybrid, CloudHybridSingle, CloudHybridEnsemble };

std::string scenario_name(Scenario s);

struct ScenarioReport {
  std::string scenario;
  double accuracy = 0.0;
  double expected_flops = 0.0;
  double expected_latency_ms = 0.0;
  double expected_energy_mj = 0.0;
  double fraction_local = 0.0;
  std::vector<double> called_fraction;
  std::optional<double> true_negative_rate;    // binary offload scenarios
  std::optional<double> missed_local_fraction; // hybrid only
  double resource_saving_factor = 0.0;
};

/// Everything needed to score scenarios without re-running models: one
/// forward pass of the zoo, heads and mux over a dataset.
struct EvalCache {
  int n_samples = 0;
  int n_models = 0;
  std::vector<int> labels;
  std::vector<std::vector<std::uint8_t>> correct;  // [model][sample]
  std::vector<Tensor> probs;                       // per model [samples x K]
  std::vector<Tensor> projected;                   // per model [samples x S]
  Tensor weights;                                  // [samples x N]
};

EvalCache build_eval_cache(const Dataset& data, const ModelBank& bank, const MuxNet& mux);

ScenarioReport evaluate_scenario(Scenario s, const EvalCache& cache, const ModelBank& bank,
                                 const MuxNet& mux, const RoutePolicy& policy, const CostProfile& profile,
                                 int mobile_idx, int cloud_idx);

/// Spec-level convenience: builds the cache internally.
ScenarioReport evaluate_scenario(const Dataset& data, const ModelBank& bank, const MuxNet& mux,
                                 const RoutePolicy& policy, const CostProfile& profile, Scenario s,
                                 int mobile_idx, int cloud_idx);

/// entry (i, j) = fraction of inputs model i solves that model j does not.
std::vector<std::vector<double>> expertise_matrix(const std::vector<std::vector<std::uint8_t>>& correct);

/// Fraction of inputs at least one model solves.
double union_accuracy(const std::vector<std::vector<std::uint8_t>>& correct);

struct VennStats {
  double mean_d_pos = 0.0;  // mean distance over both-correct pairs
  double mean_d_neg = 0.0;  // mean distance over exactly-one-correct pairs
  double gap = 0.0;
  std::int64_t pos_pairs = 0;
  std::int64_t neg_pairs = 0;
};

/// Distance statistics over model pairs of held-out projected embeddings.
VennStats venn_stats(const EvalCache& cache);

// ---- serialization ----------------------------------------------------------

std::string scenario_reports_to_json(const std::vector<ScenarioReport>& reports);
void write_scenario_csv(const std::string& path, const std::vector<ScenarioReport>& reports);
void write_expertise_csv(const std::string& path, const std::vector<std::vector<double>>& matrix,
                         const std::vector<std::string>& model_ids);

}  // namespace mux
