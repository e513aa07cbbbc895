#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "mux/costsim.hpp"
#include "mux/errors.hpp"
#include "mux/rng.hpp"

using namespace mux;

namespace {

CostProfile random_profile(Rng& rng) {
  const auto terms = [&rng] { return CostTerms{rng.next_double() * 20, rng.next_double() * 100, rng.next_double() * 1e9}; };
  CostProfile p;
  p.mobile_compute = terms();
  p.cloud_compute = terms();
  p.mux = terms();
  p.upload = terms();
  p.download = terms();
  return p;
}

}  // namespace

TEST_CASE("mobile-only cost is the mobile compute cost and nothing else") {
  const CostProfile published = published_mobile_cloud_profile();
  const CostTerms c = cost_mobile_only(published);
  CHECK(c.latency_ms == doctest::Approx(3.53).epsilon(1e-12));
  CHECK(c.energy_mj == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(c.flops == doctest::Approx(299e6).epsilon(1e-12));

  CostProfile zero;
  const CostTerms z = cost_mobile_only(zero);
  CHECK(z.latency_ms == 0.0);
  CHECK(z.energy_mj == 0.0);

  // independent of the network profile
  CostProfile p = published;
  p.upload.latency_ms = 9999.0;
  CHECK(cost_mobile_only(p).latency_ms == c.latency_ms);
}

TEST_CASE("cloud-only cost composes upload, compute and download") {
  const CostProfile published = published_mobile_cloud_profile();
  const CostTerms c = cost_cloud_only(published);
  CHECK(c.latency_ms == doctest::Approx(13.1).epsilon(1e-9));
  CHECK(c.energy_mj == doctest::Approx(110.0).epsilon(1e-9));
  CHECK(c.flops == doctest::Approx(16.4e9).epsilon(1e-9));

  CostProfile parts;
  parts.upload.latency_ms = 3.0;
  parts.cloud_compute.latency_ms = 5.0;
  parts.download.latency_ms = 2.0;
  CHECK(cost_cloud_only(parts).latency_ms == doctest::Approx(10.0));

  CostProfile no_net;
  no_net.cloud_compute.latency_ms = 7.0;
  CHECK(cost_cloud_only(no_net).latency_ms == doctest::Approx(7.0));
}

TEST_CASE("hybrid cost is affine in the local fraction with the printed endpoints") {
  const CostProfile published = published_mobile_cloud_profile();
  CHECK(cost_hybrid(published, 1.0).latency_ms == doctest::Approx(cost_hybrid_local(published).latency_ms).epsilon(1e-12));
  CHECK(cost_hybrid(published, 0.0).latency_ms == doctest::Approx(cost_hybrid_cloud(published).latency_ms).epsilon(1e-12));

  // printed hybrid row is reproduced exactly from the back-solved profile
  const CostTerms hybrid = cost_hybrid(published, kPublishedFractionLocal);
  CHECK(hybrid.latency_ms == doctest::Approx(10.12).epsilon(1e-9));
  CHECK(hybrid.energy_mj == doctest::Approx(55.36).epsilon(1e-9));
  CHECK(hybrid.flops == doctest::Approx(5.75e9).epsilon(1e-9));

  SUBCASE("hand arithmetic midpoint") {
    CostProfile p;
    p.mux.latency_ms = 0.0;
    p.mobile_compute.latency_ms = 5.0;
    p.upload.latency_ms = 6.0;
    p.cloud_compute.latency_ms = 5.0;
    p.download.latency_ms = 4.0;
    CHECK(cost_hybrid(p, 0.68).latency_ms == doctest::Approx(0.68 * 5.0 + 0.32 * 15.0).epsilon(1e-12));
  }

  SUBCASE("affine identity on random profiles") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const CostProfile p = random_profile(rng);
      const double f = rng.next_double();
      const CostTerms mid = cost_hybrid(p, f);
      const CostTerms lo = cost_hybrid(p, 0.0);
      const CostTerms hi = cost_hybrid(p, 1.0);
      CHECK(std::abs(mid.latency_ms - (f * hi.latency_ms + (1 - f) * lo.latency_ms)) < 1e-9);
      CHECK(std::abs(mid.energy_mj - (f * hi.energy_mj + (1 - f) * lo.energy_mj)) < 1e-9);
    }
  }

  CHECK_THROWS_AS(cost_hybrid(published, -0.1), NumericError);
  CHECK_THROWS_AS(cost_hybrid(published, 1.1), NumericError);
}

TEST_CASE("expected cloud-hybrid cost is the called-weighted sum") {
  SUBCASE("published columns give 5.606 GFLOPs, not the printed 5.75") {
    const Table2Replay r = replay_table2();
    CHECK(r.expected_flops == doctest::Approx(5.605814e9).epsilon(1e-6));
    CHECK(r.discrepancy_pct > 0.0);
    CHECK(r.discrepancy_pct <= 3.0);
    CHECK(r.note.find("5.75") != std::string::npos);
  }
  SUBCASE("one-hot called fractions select a single model's cost") {
    const std::vector<CostTerms> costs = {{1, 0, 10}, {2, 0, 20}, {3, 0, 30}};
    const CostTerms c = cost_cloud_hybrid(costs, {0.0, 1.0, 0.0});
    CHECK(c.latency_ms == doctest::Approx(2.0));
    CHECK(c.flops == doctest::Approx(20.0));
  }
  SUBCASE("uniform called fractions over equal costs reproduce that cost") {
    const std::vector<CostTerms> costs = {{4, 0, 7}, {4, 0, 7}};
    const CostTerms c = cost_cloud_hybrid(costs, {0.5, 0.5});
    CHECK(c.latency_ms == doctest::Approx(4.0));
    CHECK(c.flops == doctest::Approx(7.0));
  }
  SUBCASE("result is bounded by the extreme model costs") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<CostTerms> costs;
      std::vector<double> called;
      double rest = 1.0;
      for (int i = 0; i < 4; ++i) {
        costs.push_back({rng.next_double() * 10, 0, 0});
        const double c = i == 3 ? rest : rest * rng.next_double();
        called.push_back(c);
        rest -= c;
      }
      double lo = 1e18, hi = -1e18;
      for (const CostTerms& c : costs) {
        lo = std::min(lo, c.latency_ms);
        hi = std::max(hi, c.latency_ms);
      }
      const double got = cost_cloud_hybrid(costs, called).latency_ms;
      CHECK(got >= lo - 1e-12);
      CHECK(got <= hi + 1e-12);
    }
  }
  SUBCASE("called fractions must sum to one") {
    CHECK_THROWS_AS(cost_cloud_hybrid({{1, 0, 0}, {2, 0, 0}}, {0.5, 0.4}), NumericError);
  }
}

TEST_CASE("resource-saving factor from the printed numbers is 2.85x") {
  const Table2Replay r = replay_table2();
  CHECK(std::abs(r.saving_factor_printed - 2.85) <= 0.01);
}

TEST_CASE("table 1 replay identity residual is negligible") {
  const Table1Replay r = replay_table1();
  CHECK(r.identity_residual <= 1e-9);
  // the back-solved mux cost sits within rounding of the mobile model
  const CostProfile p = published_mobile_cloud_profile();
  CHECK(std::abs(p.mux.latency_ms - 3.53) < 0.01);
  CHECK(std::abs(p.mux.energy_mj - 12.0) < 0.01);
  CHECK(std::abs(p.mux.flops - 0.299e9) < 0.002e9);
}

TEST_CASE("expertise matrix counts solved-by-one-not-the-other fractions") {
  SUBCASE("identical bitmaps give the zero matrix") {
    const std::vector<std::vector<std::uint8_t>> correct = {{1, 0, 1, 0}, {1, 0, 1, 0}};
    const auto m = expertise_matrix(correct);
    for (const auto& row : m) {
      for (double v : row) CHECK(v == 0.0);
    }
  }
  SUBCASE("all-correct vs all-wrong") {
    const std::vector<std::vector<std::uint8_t>> correct = {{1, 1, 1}, {0, 0, 0}};
    const auto m = expertise_matrix(correct);
    CHECK(m[0][1] == doctest::Approx(1.0));
    CHECK(m[1][0] == doctest::Approx(0.0));
  }
  SUBCASE("hand count on 1100 vs 1010") {
    const std::vector<std::vector<std::uint8_t>> correct = {{1, 1, 0, 0}, {1, 0, 1, 0}};
    const auto m = expertise_matrix(correct);
    CHECK(m[0][1] == doctest::Approx(0.25));
    CHECK(m[1][0] == doctest::Approx(0.25));
    CHECK(m[0][0] == 0.0);
    CHECK(m[1][1] == 0.0);
  }
  SUBCASE("entries stay in [0, 1]") {
    Rng rng(31);
    std::vector<std::vector<std::uint8_t>> correct(3, std::vector<std::uint8_t>(64));
    for (auto& row : correct) {
      for (auto& b : row) b = rng.next_below(2) != 0;
    }
    for (const auto& row : expertise_matrix(correct)) {
      for (double v : row) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("mismatched bitmap lengths are rejected") {
    CHECK_THROWS_AS(expertise_matrix({{1, 0}, {1}}), ConfigError);
  }
}

TEST_CASE("union accuracy is the oracle-router accuracy") {
  const std::vector<std::vector<std::uint8_t>> correct = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 1, 1, 0}};
  CHECK(union_accuracy(correct) == doctest::Approx(0.75));
  // oracle beats every individual model by construction
  for (const auto& row : correct) {
    double acc = 0.0;
    for (std::uint8_t b : row) acc += b;
    CHECK(union_accuracy(correct) >= acc / 4.0);
  }
}

TEST_CASE("venn statistics separate both-correct from one-correct pairs") {
  EvalCache cache;
  cache.n_samples = 2;
  cache.n_models = 2;
  cache.labels = {0, 0};
  cache.correct = {{1, 1}, {1, 0}};
  // sample 0: both correct, identical embeddings -> d = 1
  // sample 1: exactly one correct, opposite embeddings -> d = 0
  cache.projected = {Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::from({2, 2}, {1, 0, 0, -1})};
  const VennStats v = venn_stats(cache);
  CHECK(v.pos_pairs == 1);
  CHECK(v.neg_pairs == 1);
  CHECK(v.mean_d_pos == doctest::Approx(1.0));
  CHECK(v.mean_d_neg == doctest::Approx(0.0));
  CHECK(v.gap == doctest::Approx(1.0));
}

TEST_CASE("scenario report JSON carries the documented fields") {
  ScenarioReport r;
  r.scenario = "mobile_only";
  r.called_fraction = {1.0, 0.0};
  r.true_negative_rate = 1.0;
  const std::string text = scenario_reports_to_json({r});
  const nlohmann::json arr = nlohmann::json::parse(text);
  REQUIRE(arr.size() == 1);
  for (const char* key : {"scenario", "accuracy", "expected_flops", "expected_latency_ms",
                          "expected_energy_mj", "fraction_local", "called_fraction",
                          "true_negative_rate", "missed_local_fraction", "resource_saving_factor"}) {
    CHECK(arr[0].contains(key));
  }
  CHECK(arr[0]["missed_local_fraction"].is_null());
}
