#include "mux/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "mux/checkpoint.hpp"
#include "mux/contrastive.hpp"
#include "mux/costsim.hpp"
#include "mux/errors.hpp"
#include "mux/multiplexer.hpp"
#include "mux/router.hpp"

namespace mux {

using nlohmann::json;

namespace fs = std::filesystem;

namespace {

/// Timestamped sidecar logger; everything else written by the pipeline is
/// bit-deterministic.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}

  void line(const std::string& msg) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%d %H:%M:%S", std::gmtime(&t));
    out_ << '[' << stamp << "] " << msg << '\n';
    out_.flush();
    std::cout << msg << '\n';
  }

 private:
  std::ofstream out_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<CostedModel> load_zoo(const RunConfig& cfg, const RunPaths& paths) {
  std::vector<CostedModel> models;
  for (const Architecture& a : cfg.models) {
    const fs::path p = paths.model_checkpoint(a.id);
    if (!fs::exists(p)) throw IoError("missing checkpoint " + p.string() + " (run train-zoo first)");
    LoadedClassifier lc = load_classifier(p.string());
    if (lc.model.model.arch.id != a.id) {
      throw ConfigError("checkpoint " + p.string() + " holds model '" + lc.model.model.arch.id +
                        "', config expects '" + a.id + "'");
    }
    models.push_back(std::move(lc.model));
  }
  return models;
}

std::vector<double> per_model_accuracy(const EvalCache& cache) {
  std::vector<double> acc(static_cast<std::size_t>(cache.n_models), 0.0);
  for (int i = 0; i < cache.n_models; ++i) {
    std::int64_t c = 0;
    for (std::uint8_t b : cache.correct[static_cast<std::size_t>(i)]) c += b;
    acc[static_cast<std::size_t>(i)] = static_cast<double>(c) / cache.n_samples;
  }
  return acc;
}

std::vector<double> model_val_accuracy(const std::vector<CostedModel>& models, const Dataset& val) {
  std::vector<double> acc(models.size(), 0.0);
  const std::vector<Batch> batches = make_eval_batches(val, 64);
  for (const Batch& b : batches) {
    const int B = b.inputs.dim(0);
    for (std::size_t i = 0; i < models.size(); ++i) {
      auto [logits, emb] = models[i].model.forward(b.inputs);
      const int K = logits.dim(1);
      for (int s = 0; s < B; ++s) {
        if (argmax(logits.data.data() + static_cast<std::size_t>(s) * K, K) == b.labels[static_cast<std::size_t>(s)]) {
          acc[i] += 1.0;
        }
      }
    }
  }
  for (double& a : acc) a /= val.size();
  return acc;
}

/// Top-2 principal components by power iteration with deflation;
/// deterministic start vectors.
std::pair<std::vector<double>, std::vector<double>> pca2(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  auto centered = [&](std::size_t i, std::size_t k) { return rows[i][k] - mean[k]; };
  auto power_component = [&](const std::vector<double>* deflate) {
    std::vector<double> v(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) v[k] = 1.0 / std::sqrt(static_cast<double>(d)) * (k % 2 == 0 ? 1.0 : -1.0);
    for (int iter = 0; iter < 100; ++iter) {
      if (deflate) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += v[k] * (*deflate)[k];
        for (std::size_t k = 0; k < d; ++k) v[k] -= dot * (*deflate)[k];
      }
      std::vector<double> next(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += centered(i, k) * v[k];
        for (std::size_t k = 0; k < d; ++k) next[k] += proj * centered(i, k);
      }
      double norm = 0.0;
      for (double x : next) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-12) break;
      for (std::size_t k = 0; k < d; ++k) v[k] = next[k] / norm;
    }
    return v;
  };
  const std::vector<double> c1 = power_component(nullptr);
  const std::vector<double> c2 = power_component(&c1);

  std::vector<double> xs(n, 0.0), ys(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      xs[i] += centered(i, k) * c1[k];
      ys[i] += centered(i, k) * c2[k];
    }
  }
  return {xs, ys};
}

}  // namespace

void run_gen_data(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.data_dir());
  RunLog log(paths.run_log());
  PlantedSpec spec = cfg.planted;
  spec.seed = Rng::derive(cfg.seed, "data.patterns");

  const PlantedDataset train = generate_planted(spec, cfg.train_samples, Rng::derive(cfg.seed, "data.train"), "train");
  const PlantedDataset mux_train = generate_planted(spec, cfg.mux_samples, Rng::derive(cfg.seed, "data.mux"), "mux_train");
  const PlantedDataset val = generate_planted(spec, cfg.val_samples, Rng::derive(cfg.seed, "data.val"), "val");
  save_dataset(paths.train_file().string(), train.data);
  save_dataset(paths.mux_train_file().string(), mux_train.data);
  save_dataset(paths.val_file().string(), val.data);
  save_hardness_csv((paths.data_dir() / "train_hardness.csv").string(), train);
  save_hardness_csv((paths.data_dir() / "mux_train_hardness.csv").string(), mux_train);
  save_hardness_csv((paths.data_dir() / "val_hardness.csv").string(), val);
  write_text(paths.data_dir() / "config.json", config_to_json(cfg));
  log.line("gen-data: wrote " + std::to_string(train.data.size()) + " train / " +
           std::to_string(mux_train.data.size()) + " mux-train / " +
           std::to_string(val.data.size()) + " val samples to " + paths.data_dir().string());
}

void run_train_zoo(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.checkpoints_dir());
  ensure_dir(paths.logs_dir());
  RunLog log(paths.run_log());

  if (!fs::exists(paths.train_file())) throw IoError("missing dataset " + paths.train_file().string() + " (run gen-data first)");
  Dataset train = load_dataset(paths.train_file().string());
  Dataset val = load_dataset(paths.val_file().string());

  std::vector<CostedModel> models;
  for (const Architecture& a : cfg.models) {
    models.push_back(make_costed_model(a, cfg.shared_dim, Rng::derive(cfg.seed, "init.model." + a.id)));
  }

  JointTrainOptions opt;
  opt.alpha = cfg.train.alpha;
  opt.literal_eq2 = cfg.literal_eq2;
  opt.contrastive_into_backbone = cfg.train.contrastive_into_backbone;

  std::ofstream csv(paths.logs_dir() / "train_zoo.csv", std::ios::trunc);
  csv << "epoch";
  for (const auto& m : models) csv << ",loss_" << m.model.arch.id;
  csv << ",contrastive";
  for (const auto& m : models) csv << ",val_acc_" << m.model.arch.id;
  csv << '\n';

  Rng shuffle(Rng::derive(cfg.seed, "train.zoo.shuffle"));
  std::vector<double> last_losses(models.size(), 0.0);
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<double> loss_sum(models.size(), 0.0);
    double cnt_sum = 0.0;
    int steps = 0;
    for (const Batch& batch : make_batches(train, cfg.train.batch_size, shuffle)) {
      const JointStepResult r = joint_train_step(models, batch, opt);
      for (std::size_t i = 0; i < models.size(); ++i) loss_sum[i] += r.model_loss[i];
      cnt_sum += r.contrastive;
      ++steps;
    }
    const std::vector<double> val_acc = model_val_accuracy(models, val);
    csv << epoch;
    std::string msg = "train-zoo epoch " + std::to_string(epoch);
    for (std::size_t i = 0; i < models.size(); ++i) {
      last_losses[i] = loss_sum[i] / steps;
      csv << ',' << fmt(last_losses[i]);
      msg += " " + models[i].model.arch.id + "=" + fmt(val_acc[i]);
    }
    csv << ',' << fmt(cnt_sum / steps);
    for (double a : val_acc) csv << ',' << fmt(a);
    csv << '\n';
    log.line(msg);
  }

  const std::vector<double> val_acc = model_val_accuracy(models, val);
  for (std::size_t i = 0; i < models.size(); ++i) {
    TrainMeta meta;
    meta.epochs = cfg.train.epochs;
    meta.final_losses = {last_losses[i]};
    meta.val_accuracy = val_acc[i];
    save_classifier(paths.model_checkpoint(models[i].model.arch.id).string(), models[i], cfg.seed, meta);
  }
  log.line("train-zoo: wrote " + std::to_string(models.size()) + " checkpoints");
}

void run_train_mux(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.checkpoints_dir());
  ensure_dir(paths.logs_dir());
  RunLog log(paths.run_log());

  // the multiplexer fits on a split the zoo never trained on; stacking
  // weights learned on the zoo's own training data just track whichever
  // model memorized it
  if (!fs::exists(paths.mux_train_file())) {
    throw IoError("missing dataset " + paths.mux_train_file().string() + " (run gen-data first)");
  }
  Dataset train = load_dataset(paths.mux_train_file().string());
  Dataset val = load_dataset(paths.val_file().string());
  const std::vector<CostedModel> models = load_zoo(cfg, paths);

  std::vector<double> costs;
  std::vector<std::string> ids;
  for (const CostedModel& m : models) {
    costs.push_back(static_cast<double>(m.flops));
    ids.push_back(m.model.arch.id);
  }
  MuxNet mux = make_mux(cfg.mux_arch, cfg.shared_dim, costs, ids, Rng::derive(cfg.seed, "init.mux"));

  MuxTrainOptions opt;
  opt.alpha = cfg.train.mux_alpha;
  opt.lambda_distill = cfg.train.lambda_distill;

  std::ofstream csv(paths.logs_dir() / "train_mux.csv", std::ios::trunc);
  csv << "epoch,mux_loss,distill_loss,total_loss,val_route_accuracy\n";

  Rng shuffle(Rng::derive(cfg.seed, "train.mux.shuffle"));
  double last_total = 0.0;
  double route_acc = 0.0;
  for (int epoch = 0; epoch < cfg.train.mux_epochs; ++epoch) {
    double mux_sum = 0.0, distill_sum = 0.0, total_sum = 0.0;
    int steps = 0;
    for (const Batch& batch : make_batches(train, cfg.train.batch_size, shuffle)) {
      const MuxStepResult r = mux_train_step(mux, models, batch, opt);
      mux_sum += r.mux_loss;
      distill_sum += r.distill;
      total_sum += r.total;
      ++steps;
    }
    // single-select routing accuracy on the held-out split
    std::int64_t correct = 0;
    for (const Batch& b : make_eval_batches(val, 64)) {
      const MuxOutput mo = mux_forward(mux, b.inputs);
      const int B = b.inputs.dim(0);
      std::vector<Tensor> logits;
      for (const CostedModel& m : models) logits.push_back(m.model.forward(b.inputs).first);
      const int K = models[0].model.class_count();
      for (int s = 0; s < B; ++s) {
        Tensor w({mux.n_models()});
        for (int i = 0; i < mux.n_models(); ++i) w.data[static_cast<std::size_t>(i)] = mo.weights.at(s, i);
        const int pick = select_single(w, costs);
        const int pred = argmax(logits[static_cast<std::size_t>(pick)].data.data() + static_cast<std::size_t>(s) * K, K);
        if (pred == b.labels[static_cast<std::size_t>(s)]) ++correct;
      }
    }
    route_acc = static_cast<double>(correct) / val.size();
    last_total = total_sum / steps;
    csv << epoch << ',' << fmt(mux_sum / steps) << ',' << fmt(distill_sum / steps) << ','
        << fmt(last_total) << ',' << fmt(route_acc) << '\n';
    log.line("train-mux epoch " + std::to_string(epoch) + " loss=" + fmt(last_total) + " route_acc=" + fmt(route_acc));
  }

  TrainMeta meta;
  meta.epochs = cfg.train.mux_epochs;
  meta.final_losses = {last_total};
  meta.val_accuracy = route_acc;
  save_mux(paths.mux_checkpoint().string(), mux, cfg.seed, meta);
  log.line("train-mux: wrote " + paths.mux_checkpoint().string());
}

void run_evaluate(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.reports_dir());
  RunLog log(paths.run_log());

  Dataset val = load_dataset(paths.val_file().string());
  ModelBank bank(load_zoo(cfg, paths));
  if (!fs::exists(paths.mux_checkpoint())) throw IoError("missing mux checkpoint (run train-mux first)");
  LoadedMux lm = load_mux(paths.mux_checkpoint().string());
  if (lm.mux.n_models() != bank.size()) {
    throw ConfigError("mux checkpoint has " + std::to_string(lm.mux.n_models()) +
                      " models, config lists " + std::to_string(bank.size()));
  }

  const EvalCache cache = build_eval_cache(val, bank, lm.mux);

  int mobile_idx = 0, cloud_idx = 0;
  for (int i = 1; i < bank.size(); ++i) {
    if (bank.at(i).flops < bank.at(mobile_idx).flops) mobile_idx = i;
    if (bank.at(i).flops > bank.at(cloud_idx).flops) cloud_idx = i;
  }
  const double input_bytes = static_cast<double>(val.inputs.size() / val.size()) * 4.0;
  const CostProfile profile = derive_profile(cfg.cost, bank, lm.mux, mobile_idx, cloud_idx, input_bytes);

  std::vector<ScenarioReport> reports;
  reports.push_back(evaluate_scenario(Scenario::MobileOnly, cache, bank, lm.mux, cfg.policy, profile, mobile_idx, cloud_idx));
  reports.push_back(evaluate_scenario(Scenario::CloudOnly, cache, bank, lm.mux, cfg.policy, profile, mobile_idx, cloud_idx));
  if (bank.size() == 2) {
    reports.push_back(evaluate_scenario(Scenario::Hybrid, cache, bank, lm.mux, cfg.policy, profile, mobile_idx, cloud_idx));
  }
  reports.push_back(evaluate_scenario(Scenario::CloudHybridSingle, cache, bank, lm.mux, cfg.policy, profile, mobile_idx, cloud_idx));
  reports.push_back(evaluate_scenario(Scenario::CloudHybridEnsemble, cache, bank, lm.mux, cfg.policy, profile, mobile_idx, cloud_idx));

  const std::vector<double> model_acc = per_model_accuracy(cache);
  const VennStats venn = venn_stats(cache);

  json summary;
  summary["seed"] = cfg.seed;
  summary["mobile_model"] = bank.at(mobile_idx).model.arch.id;
  summary["cloud_model"] = bank.at(cloud_idx).model.arch.id;
  json jmodels = json::array();
  for (int i = 0; i < bank.size(); ++i) {
    jmodels.push_back({{"id", bank.at(i).model.arch.id},
                       {"accuracy", model_acc[static_cast<std::size_t>(i)]},
                       {"flops", bank.at(i).flops},
                       {"embedding_dim", bank.at(i).model.embedding_dim()}});
  }
  summary["models"] = std::move(jmodels);
  summary["mux_flops"] = mux_flops(lm.mux);
  summary["union_accuracy"] = union_accuracy(cache.correct);
  summary["venn"] = {{"mean_d_pos", venn.mean_d_pos},
                     {"mean_d_neg", venn.mean_d_neg},
                     {"gap", venn.gap},
                     {"pos_pairs", venn.pos_pairs},
                     {"neg_pairs", venn.neg_pairs}};
  summary["scenarios"] = json::parse(scenario_reports_to_json(reports));

  write_text(paths.reports_dir() / "scenarios.json", summary.dump(2) + "\n");
  write_scenario_csv((paths.reports_dir() / "scenarios.csv").string(), reports);

  std::vector<std::string> ids;
  for (int i = 0; i < bank.size(); ++i) ids.push_back(bank.at(i).model.arch.id);
  write_expertise_csv((paths.reports_dir() / "expertise.csv").string(), expertise_matrix(cache.correct), ids);

  // embedding export: sample id, model id, projected coordinates, correctness
  {
    std::ofstream csv(paths.embeddings_csv(), std::ios::trunc);
    csv << "sample,model";
    for (int k = 0; k < cfg.shared_dim; ++k) csv << ",e" << k;
    csv << ",correct\n";
    for (int s = 0; s < cache.n_samples; ++s) {
      for (int i = 0; i < cache.n_models; ++i) {
        csv << s << ',' << ids[static_cast<std::size_t>(i)];
        for (int k = 0; k < cfg.shared_dim; ++k) {
          csv << ',' << fmt(cache.projected[static_cast<std::size_t>(i)].at(s, k));
        }
        csv << ',' << static_cast<int>(cache.correct[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)]) << '\n';
      }
    }
  }

  if (cfg.eval.export_pca) {
    std::vector<std::vector<double>> rows;
    for (int s = 0; s < cache.n_samples; ++s) {
      for (int i = 0; i < cache.n_models; ++i) {
        std::vector<double> r(static_cast<std::size_t>(cfg.shared_dim));
        for (int k = 0; k < cfg.shared_dim; ++k) r[static_cast<std::size_t>(k)] = cache.projected[static_cast<std::size_t>(i)].at(s, k);
        rows.push_back(std::move(r));
      }
    }
    const auto [xs, ys] = pca2(rows);
    std::ofstream csv(paths.embeddings_pca_csv(), std::ios::trunc);
    csv << "sample,model,x,y,correct\n";
    std::size_t r = 0;
    for (int s = 0; s < cache.n_samples; ++s) {
      for (int i = 0; i < cache.n_models; ++i, ++r) {
        csv << s << ',' << ids[static_cast<std::size_t>(i)] << ',' << fmt(xs[r]) << ',' << fmt(ys[r]) << ','
            << static_cast<int>(cache.correct[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)]) << '\n';
      }
    }
  }

  log.line("evaluate: union_accuracy=" + fmt(union_accuracy(cache.correct)) + " venn_gap=" + fmt(venn.gap));
  for (const ScenarioReport& r : reports) {
    log.line("evaluate: " + r.scenario + " acc=" + fmt(r.accuracy) + " flops=" + fmt(r.expected_flops) +
             " saving=" + fmt(r.resource_saving_factor) + "x");
  }
}

void run_simulate(const RunConfig& cfg, const RunPaths& paths) {
  ensure_dir(paths.reports_dir());
  RunLog log(paths.run_log());

  const Table1Replay t1 = replay_table1();
  const Table2Replay t2 = replay_table2();

  auto terms = [](const CostTerms& t) {
    return json{{"latency_ms", t.latency_ms}, {"energy_mj", t.energy_mj}, {"flops", t.flops}};
  };
  json j;
  j["table1"] = {{"mobile_only", terms(t1.mobile)},
                 {"cloud_only", terms(t1.cloud_only)},
                 {"hybrid_local", terms(t1.hybrid_local)},
                 {"hybrid_cloud", terms(t1.hybrid_cloud)},
                 {"hybrid", terms(t1.hybrid)},
                 {"fraction_local", t1.fraction_local},
                 {"identity_residual", t1.identity_residual},
                 {"printed_hybrid", {{"latency_ms", kPublishedHybridLatencyMs}, {"energy_mj", kPublishedHybridEnergyMj}, {"flops", kPublishedHybridFlops}}},
                 {"note", "multiplexer cost back-solved from the printed hybrid row; it lands within rounding "
                          "of the mobile model's own cost"}};
  json rows = json::array();
  for (const Table2Row& r : published_benchmark_table()) {
    rows.push_back({{"model", r.name}, {"flops", r.flops}, {"latency_ms", r.latency_ms}, {"accuracy", r.accuracy}, {"called", r.called}});
  }
  j["table2"] = {{"rows", std::move(rows)},
                 {"expected_flops", t2.expected_flops},
                 {"printed_flops", t2.printed_flops},
                 {"discrepancy_pct", t2.discrepancy_pct},
                 {"saving_factor_printed", t2.saving_factor_printed},
                 {"saving_factor_recomputed", t2.saving_factor_recomputed},
                 {"note", t2.note}};
  j["largest_model_flops"] = kPublishedLargestFlops;
  (void)cfg;

  write_text(paths.reports_dir() / "simulate.json", j.dump(2) + "\n");

  std::ofstream csv(paths.reports_dir() / "simulate.csv", std::ios::trunc);
  csv << "scenario,latency_ms,energy_mj,flops\n";
  auto row = [&csv](const char* name, const CostTerms& t) {
    csv << name << ',' << fmt(t.latency_ms) << ',' << fmt(t.energy_mj) << ',' << fmt(t.flops) << '\n';
  };
  row("mobile_only", t1.mobile);
  row("cloud_only", t1.cloud_only);
  row("hybrid", t1.hybrid);
  csv << "cloud_hybrid_single,,," << fmt(t2.expected_flops) << '\n';

  log.line("simulate: hybrid latency " + fmt(t1.hybrid.latency_ms) + " ms (printed " + fmt(kPublishedHybridLatencyMs) +
           "), expected flops " + fmt(t2.expected_flops / 1e9) + " GFLOPs vs printed " + fmt(t2.printed_flops / 1e9) +
           " GFLOPs, saving factor " + fmt(t2.saving_factor_printed) + "x");
}

}  // namespace mux
