#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mux/errors.hpp"
#include "mux/router.hpp"
#include "mux/rng.hpp"

using namespace mux;

namespace {

Architecture probe_classifier(const std::string& id, int hidden, std::uint64_t flops_scale) {
  Architecture a;
  a.id = id;
  a.input_shape = {1, 6, 6};
  a.classes = 4;
  a.layers = {LayerDesc::flatten(), LayerDesc::dense(36, hidden), LayerDesc::relu(),
              LayerDesc::dense(hidden, 4)};
  (void)flops_scale;
  return a;
}

MuxNet probe_mux(const std::vector<double>& costs, std::uint64_t seed, bool zero_backbone = false) {
  Architecture a;
  a.id = "mux";
  a.input_shape = {1, 6, 6};
  a.classes = 0;
  a.layers = {LayerDesc::conv(1, 3, 3, 3, 1), LayerDesc::relu(), LayerDesc::conv(3, 4, 4, 4, 1),
              LayerDesc::flatten()};
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < costs.size(); ++i) ids.push_back("m" + std::to_string(i));
  MuxNet mux = make_mux(a, 8, costs, ids, seed);
  if (zero_backbone) {
    for (Tensor& p : mux.params) {
      for (float& v : p.data) v = 0.0f;
    }
    for (float& v : mux.v.data) v = 0.0f;
  }
  return mux;
}

ModelBank probe_bank(int n, std::uint64_t seed) {
  std::vector<CostedModel> models;
  for (int i = 0; i < n; ++i) {
    models.push_back(make_costed_model(probe_classifier("m" + std::to_string(i), 4 + 2 * i, 1), 8,
                                       seed + static_cast<std::uint64_t>(i)));
  }
  return ModelBank(std::move(models));
}

}  // namespace

TEST_CASE("select_single picks the heaviest weight") {
  CHECK(select_single(Tensor::from({3}, {0.2f, 0.7f, 0.1f}), {1, 1, 1}) == 1);
  CHECK(select_single(Tensor::from({3}, {0.0f, 0.0f, 1.0f}), {1, 1, 1}) == 2);
}

TEST_CASE("select_single breaks ties toward the cheaper model, then lower index") {
  CHECK(select_single(Tensor::from({2}, {0.5f, 0.5f}), {1.0, 2.0}) == 0);
  CHECK(select_single(Tensor::from({2}, {0.5f, 0.5f}), {2.0, 1.0}) == 1);
  CHECK(select_single(Tensor::from({3}, {0.4f, 0.4f, 0.2f}), {5.0, 5.0, 1.0}) == 0);
  CHECK(select_single(Tensor::from({2}, {0.5f, 0.5f}), {}) == 0);
}

TEST_CASE("select_single rejects an empty weight vector") {
  CHECK_THROWS_AS(select_single(Tensor::from({1}, {1.0f}), {1.0, 2.0}), NumericError);
}

TEST_CASE("select_ensemble thresholds strictly and falls back to argmax") {
  const auto s1 = select_ensemble(Tensor::from({3}, {0.4f, 0.35f, 0.25f}), 0.288);
  CHECK(s1 == std::vector<int>{0, 1});
  const auto s2 = select_ensemble(Tensor::from({3}, {0.9f, 0.05f, 0.05f}), 0.288);
  CHECK(s2 == std::vector<int>{0});
  const auto s3 = select_ensemble(Tensor::from({3}, {0.3f, 0.4f, 0.3f}), 0.5);
  CHECK(s3 == std::vector<int>{1});  // nothing above T, argmax fallback
  // boundary: exactly T is excluded
  const auto s4 = select_ensemble(Tensor::from({2}, {0.5f, 0.5f}), 0.5);
  CHECK(s4.size() == 1);
  CHECK_THROWS_AS(select_ensemble(Tensor::from({2}, {0.5f, 0.5f}), 1.0), NumericError);
}

TEST_CASE("offload decision thresholds at one half, local on the boundary") {
  CHECK(offload_decision(0.49) == false);
  CHECK(offload_decision(0.51) == true);
  CHECK(offload_decision(0.5) == false);
  CHECK_THROWS_AS(offload_decision(1.5), NumericError);
}

TEST_CASE("single-mode routing executes exactly one backbone") {
  const ModelBank bank = probe_bank(3, 900);
  const MuxNet mux = probe_mux(bank.flops_costs(), 901);
  RoutePolicy policy;
  policy.mode = RoutePolicy::Mode::Single;

  Rng rng(7);
  Tensor x({1, 6, 6});
  for (float& v : x.data) v = rng.normal();

  bank.reset_counts();
  const RouteDecision dec = route_and_predict(x, bank, mux, policy);
  CHECK(dec.selected.size() == 1);
  std::int64_t total_calls = 0;
  for (int i = 0; i < bank.size(); ++i) {
    const std::int64_t c = bank.call_counts()[static_cast<std::size_t>(i)];
    total_calls += c;
    if (i == dec.selected[0]) {
      CHECK(c == 1);
    } else {
      CHECK(c == 0);
    }
  }
  CHECK(total_calls == 1);
  CHECK(dec.flops == mux_flops(mux) + bank.at(dec.selected[0]).flops);

  double sum = 0.0;
  for (float v : dec.probs.data) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("uniform weights with a zeroed mux select everything above threshold") {
  const ModelBank bank = probe_bank(2, 910);
  const MuxNet mux = probe_mux(bank.flops_costs(), 911, /*zero_backbone=*/true);
  RoutePolicy policy;
  policy.mode = RoutePolicy::Mode::Ensemble;
  policy.threshold = 0.288;

  Tensor x({1, 6, 6}, 0.5f);
  const RouteDecision dec = route_and_predict(x, bank, mux, policy);
  CHECK(dec.selected == std::vector<int>{0, 1});  // w = [0.5, 0.5]
  // uniform average of the two probability vectors
  const Tensor p0 = softmax(bank.at(0).model.forward(x).first);
  const Tensor p1 = softmax(bank.at(1).model.forward(x).first);
  for (int k = 0; k < 4; ++k) {
    const float expect = 0.5f * p0.data[static_cast<std::size_t>(k)] + 0.5f * p1.data[static_cast<std::size_t>(k)];
    CHECK(dec.probs.data[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("binary offload routes by the cloud weight") {
  const ModelBank bank = probe_bank(2, 920);  // model 1 is larger -> cloud
  const MuxNet mux = probe_mux(bank.flops_costs(), 921, /*zero_backbone=*/true);
  RoutePolicy policy;
  policy.mode = RoutePolicy::Mode::BinaryOffload;

  Tensor x({1, 6, 6}, 0.25f);
  const RouteDecision dec = route_and_predict(x, bank, mux, policy);
  // w = [0.5, 0.5] and 0.5 stays local
  CHECK(dec.selected == std::vector<int>{0});
}

TEST_CASE("route_and_predict matches a brute-force oracle on a toy set") {
  const ModelBank bank = probe_bank(3, 930);
  const MuxNet mux = probe_mux(bank.flops_costs(), 931);
  const std::vector<double> costs = bank.flops_costs();

  Rng rng(4242);
  for (const auto mode : {RoutePolicy::Mode::Single, RoutePolicy::Mode::Ensemble}) {
    RoutePolicy policy;
    policy.mode = mode;
    policy.threshold = 0.288;
    for (int sample = 0; sample < 20; ++sample) {
      Tensor x({1, 6, 6});
      for (float& v : x.data) v = rng.normal();

      // oracle: run every model up front, then apply the printed selection
      // rules to the stored outputs
      std::vector<Tensor> all_probs;
      for (int i = 0; i < bank.size(); ++i) {
        all_probs.push_back(softmax(bank.at(i).model.forward(x).first));
      }
      const MuxOutput mo = mux_forward(mux, x);
      std::vector<int> expect_sel;
      if (mode == RoutePolicy::Mode::Single) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
          const float wi = mo.weights.data[static_cast<std::size_t>(i)];
          const float wb = mo.weights.data[static_cast<std::size_t>(best)];
          if (wi > wb || (wi == wb && costs[static_cast<std::size_t>(i)] < costs[static_cast<std::size_t>(best)])) best = i;
        }
        expect_sel = {best};
      } else {
        for (int i = 0; i < 3; ++i) {
          if (mo.weights.data[static_cast<std::size_t>(i)] > policy.threshold) expect_sel.push_back(i);
        }
        if (expect_sel.empty()) expect_sel = {argmax(mo.weights.data.data(), 3)};
      }
      Tensor expect_probs({4});
      for (int s : expect_sel) {
        const double scale = 1.0 / static_cast<double>(expect_sel.size());
        for (int k = 0; k < 4; ++k) {
          expect_probs.data[static_cast<std::size_t>(k)] += static_cast<float>(scale * all_probs[static_cast<std::size_t>(s)].data[static_cast<std::size_t>(k)]);
        }
      }

      bank.reset_counts();
      const RouteDecision dec = route_and_predict(x, bank, mux, policy);
      CHECK(dec.selected == expect_sel);
      CHECK(dec.probs.data == expect_probs.data);
      for (int i = 0; i < bank.size(); ++i) {
        const bool selected = std::find(dec.selected.begin(), dec.selected.end(), i) != dec.selected.end();
        CHECK(bank.call_counts()[static_cast<std::size_t>(i)] == (selected ? 1 : 0));
      }
    }
  }
}

TEST_CASE("weighted averaging renormalizes the selected weights") {
  const ModelBank bank = probe_bank(2, 940);
  const MuxNet mux = probe_mux(bank.flops_costs(), 941);
  RoutePolicy policy;
  policy.mode = RoutePolicy::Mode::Ensemble;
  policy.threshold = 0.01;  // select everything
  policy.weighted_average = true;

  Rng rng(3);
  Tensor x({1, 6, 6});
  for (float& v : x.data) v = rng.normal();
  const MuxOutput mo = mux_forward(mux, x);
  const RouteDecision dec = route_and_predict(x, bank, mux, policy);

  const Tensor p0 = softmax(bank.at(0).model.forward(x).first);
  const Tensor p1 = softmax(bank.at(1).model.forward(x).first);
  const double wsum = mo.weights.data[0] + mo.weights.data[1];
  for (int k = 0; k < 4; ++k) {
    const double expect = (mo.weights.data[0] / wsum) * p0.data[static_cast<std::size_t>(k)] +
                          (mo.weights.data[1] / wsum) * p1.data[static_cast<std::size_t>(k)];
    CHECK(dec.probs.data[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("bank and mux sizes must agree") {
  const ModelBank bank = probe_bank(3, 950);
  const MuxNet mux = probe_mux({1.0, 2.0}, 951);
  RoutePolicy policy;
  CHECK_THROWS_AS(route_and_predict(Tensor({1, 6, 6}), bank, mux, policy), ConfigError);
}
