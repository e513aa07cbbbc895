#include "mux/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mux/errors.hpp"

namespace mux {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (prefix.empty() ? key : prefix + "." + key) + "'");
    }
  }
}

Architecture default_mux_arch(const std::vector<int>& input, int meta_dim) {
  Architecture a;
  a.id = "mux";
  a.input_shape = input;
  a.classes = 0;
  a.layers = {
      LayerDesc::conv(input[0], 4, 3, 3, 2), LayerDesc::relu(),
      LayerDesc::conv(4, 6, 3, 3, 2),        LayerDesc::relu(),
      LayerDesc::conv(6, 8, 3, 3, 1),        LayerDesc::relu(),
      LayerDesc::conv(8, meta_dim, 1, 1, 1), LayerDesc::flatten(),
  };
  return a;
}

// Hidden relu stack, then a linear embedding layer feeding the classifier.
// A linear embedding stays away from the exact-zero vector, which a relu
// embedding can collapse onto under the push-apart term of the pair loss.
Architecture band_model(const std::string& id, int r0, int r1, std::vector<int> widths, int emb_width, int classes) {
  Architecture a;
  a.id = id;
  a.input_shape = {1, 16, 16};
  a.classes = classes;
  const int in_width = (r1 - r0) * 16;
  a.layers = {LayerDesc::crop_rows(r0, r1), LayerDesc::flatten()};
  int prev = in_width;
  for (int w : widths) {
    a.layers.push_back(LayerDesc::dense(prev, w));
    a.layers.push_back(LayerDesc::relu());
    prev = w;
  }
  a.layers.push_back(LayerDesc::dense(prev, emb_width));
  a.layers.push_back(LayerDesc::dense(emb_width, classes));
  return a;
}

Architecture arch_from_jsonobj(const json& j) { return Architecture::from_json(j.dump()); }

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.planted = default_planted_spec(cfg.seed);
  cfg.models = {
      band_model("m_small", 0, 5, {32}, 16, 10),
      band_model("m_medium", 5, 10, {48}, 24, 10),
      band_model("m_wide", 10, 16, {160}, 64, 10),
  };
  cfg.mux_arch = default_mux_arch(cfg.planted.input_shape, cfg.meta_dim);
  return cfg;
}

void RunConfig::validate() const {
  if (models.empty()) throw ConfigError("config: at least one model required");
  std::set<std::string> ids;
  for (const Architecture& a : models) {
    if (a.classes != planted.classes) {
      throw ConfigError("config: model '" + a.id + "' has " + std::to_string(a.classes) +
                        " classes but data has " + std::to_string(planted.classes));
    }
    if (a.input_shape != planted.input_shape) {
      throw ConfigError("config: model '" + a.id + "' input shape disagrees with data");
    }
    if (!ids.insert(a.id).second) throw ConfigError("config: duplicate model id '" + a.id + "'");
    a.output_shape();
  }
  if (mux_arch.input_shape != planted.input_shape) throw ConfigError("config: mux input shape disagrees with data");
  const std::vector<int> mux_out = mux_arch.output_shape();
  if (mux_out.size() != 1 || mux_out[0] != meta_dim) {
    throw ConfigError("config: mux architecture must emit a flat meta-feature vector of width " + std::to_string(meta_dim));
  }
  if (shared_dim <= 0 || meta_dim <= 0) throw ConfigError("config: shared_dim and meta_dim must be positive");
  if (train_samples <= 0 || mux_samples <= 0 || val_samples <= 0) throw ConfigError("config: sample counts must be positive");
  if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
  if (train.epochs < 0 || train.mux_epochs < 0) throw ConfigError("config: epoch counts must be >= 0");
  if (!(train.alpha >= 0.0f) || !(train.mux_alpha >= 0.0f)) throw ConfigError("config: learning rates must be >= 0");
  if (!(policy.threshold > 0.0 && policy.threshold < 1.0)) throw ConfigError("config: router.threshold must be in (0, 1)");
  if (cost.profile != "derived" && cost.profile != "published") {
    throw ConfigError("config: cost.profile must be 'derived' or 'published'");
  }
  planted.validate();
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  RunConfig cfg = default_config();
  try {
    reject_unknown(j, {"seed", "shared_dim", "meta_dim", "models", "mux", "data", "train", "loss", "router", "cost", "eval"}, "");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shared_dim")) cfg.shared_dim = j.at("shared_dim").get<int>();
    if (j.contains("meta_dim")) cfg.meta_dim = j.at("meta_dim").get<int>();

    if (j.contains("data")) {
      const json& jd = j.at("data");
      reject_unknown(jd, {"classes", "input", "train_samples", "mux_samples", "val_samples", "regions",
                          "shared_fraction", "unsolvable_fraction", "noise"}, "data");
      if (jd.contains("classes")) cfg.planted.classes = jd.at("classes").get<int>();
      if (jd.contains("input")) cfg.planted.input_shape = jd.at("input").get<std::vector<int>>();
      if (jd.contains("train_samples")) cfg.train_samples = jd.at("train_samples").get<int>();
      if (jd.contains("mux_samples")) cfg.mux_samples = jd.at("mux_samples").get<int>();
      if (jd.contains("val_samples")) cfg.val_samples = jd.at("val_samples").get<int>();
      if (jd.contains("shared_fraction")) cfg.planted.shared_fraction = jd.at("shared_fraction").get<double>();
      if (jd.contains("unsolvable_fraction")) cfg.planted.unsolvable_fraction = jd.at("unsolvable_fraction").get<double>();
      if (jd.contains("noise")) cfg.planted.noise = jd.at("noise").get<double>();
      if (jd.contains("regions")) {
        cfg.planted.regions.clear();
        for (const json& jr : jd.at("regions")) {
          reject_unknown(jr, {"rows", "fraction", "classes"}, "data.regions[]");
          PlantedRegion r;
          const auto rows = jr.at("rows").get<std::vector<int>>();
          if (rows.size() != 2) throw ConfigError("data.regions[].rows must be [first, past-last]");
          r.row0 = rows[0];
          r.row1 = rows[1];
          r.fraction = jr.at("fraction").get<double>();
          if (jr.contains("classes")) {
            r.classes = jr.at("classes").get<std::vector<int>>();
          } else {
            for (int c = 0; c < cfg.planted.classes; ++c) r.classes.push_back(c);
          }
          cfg.planted.regions.push_back(std::move(r));
        }
      }
    }

    if (j.contains("models")) {
      cfg.models.clear();
      for (const json& jm : j.at("models")) cfg.models.push_back(arch_from_jsonobj(jm));
    }
    if (j.contains("mux")) {
      cfg.mux_arch = arch_from_jsonobj(j.at("mux"));
    } else if (j.contains("data") || j.contains("meta_dim")) {
      cfg.mux_arch = default_mux_arch(cfg.planted.input_shape, cfg.meta_dim);
    }

    if (j.contains("train")) {
      const json& jt = j.at("train");
      reject_unknown(jt, {"alpha", "epochs", "batch_size", "mux_alpha", "mux_epochs",
                          "lambda_distill", "contrastive_into_backbone"}, "train");
      if (jt.contains("alpha")) cfg.train.alpha = jt.at("alpha").get<float>();
      if (jt.contains("epochs")) cfg.train.epochs = jt.at("epochs").get<int>();
      if (jt.contains("batch_size")) cfg.train.batch_size = jt.at("batch_size").get<int>();
      if (jt.contains("mux_alpha")) cfg.train.mux_alpha = jt.at("mux_alpha").get<float>();
      if (jt.contains("mux_epochs")) cfg.train.mux_epochs = jt.at("mux_epochs").get<int>();
      if (jt.contains("lambda_distill")) cfg.train.lambda_distill = jt.at("lambda_distill").get<float>();
      if (jt.contains("contrastive_into_backbone")) cfg.train.contrastive_into_backbone = jt.at("contrastive_into_backbone").get<bool>();
    }

    if (j.contains("loss")) {
      const json& jl = j.at("loss");
      reject_unknown(jl, {"literal_eq2"}, "loss");
      if (jl.contains("literal_eq2")) cfg.literal_eq2 = jl.at("literal_eq2").get<bool>();
    }

    if (j.contains("router")) {
      const json& jr = j.at("router");
      reject_unknown(jr, {"mode", "threshold", "offload_threshold", "weighted_average"}, "router");
      if (jr.contains("mode")) {
        const std::string mode = jr.at("mode").get<std::string>();
        if (mode == "single") {
          cfg.policy.mode = RoutePolicy::Mode::Single;
        } else if (mode == "ensemble") {
          cfg.policy.mode = RoutePolicy::Mode::Ensemble;
        } else if (mode == "binary_offload") {
          cfg.policy.mode = RoutePolicy::Mode::BinaryOffload;
        } else {
          throw ConfigError("router.mode must be single, ensemble or binary_offload");
        }
      }
      if (jr.contains("threshold")) cfg.policy.threshold = jr.at("threshold").get<double>();
      if (jr.contains("offload_threshold")) cfg.policy.offload_threshold = jr.at("offload_threshold").get<double>();
      if (jr.contains("weighted_average")) cfg.policy.weighted_average = jr.at("weighted_average").get<bool>();
    }

    if (j.contains("cost")) {
      const json& jc = j.at("cost");
      reject_unknown(jc, {"profile", "device_gflops", "cloud_gflops", "uplink_mbps", "downlink_mbps",
                          "payload_bytes", "download_bytes", "radio_power_mw", "mobile_mj_per_gflop"}, "cost");
      if (jc.contains("profile")) cfg.cost.profile = jc.at("profile").get<std::string>();
      if (jc.contains("device_gflops")) cfg.cost.device_gflops = jc.at("device_gflops").get<double>();
      if (jc.contains("cloud_gflops")) cfg.cost.cloud_gflops = jc.at("cloud_gflops").get<double>();
      if (jc.contains("uplink_mbps")) cfg.cost.uplink_mbps = jc.at("uplink_mbps").get<double>();
      if (jc.contains("downlink_mbps")) cfg.cost.downlink_mbps = jc.at("downlink_mbps").get<double>();
      if (jc.contains("payload_bytes")) cfg.cost.payload_bytes = jc.at("payload_bytes").get<double>();
      if (jc.contains("download_bytes")) cfg.cost.download_bytes = jc.at("download_bytes").get<double>();
      if (jc.contains("radio_power_mw")) cfg.cost.radio_power_mw = jc.at("radio_power_mw").get<double>();
      if (jc.contains("mobile_mj_per_gflop")) cfg.cost.mobile_mj_per_gflop = jc.at("mobile_mj_per_gflop").get<double>();
    }

    if (j.contains("eval")) {
      const json& je = j.at("eval");
      reject_unknown(je, {"export_pca"}, "eval");
      if (je.contains("export_pca")) cfg.eval.export_pca = je.at("export_pca").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }

  cfg.planted.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["shared_dim"] = cfg.shared_dim;
  j["meta_dim"] = cfg.meta_dim;
  json models = json::array();
  for (const Architecture& a : cfg.models) models.push_back(json::parse(a.to_json()));
  j["models"] = std::move(models);
  j["mux"] = json::parse(cfg.mux_arch.to_json());
  json regions = json::array();
  for (const PlantedRegion& r : cfg.planted.regions) {
    regions.push_back({{"rows", {r.row0, r.row1}}, {"fraction", r.fraction}, {"classes", r.classes}});
  }
  j["data"] = {{"classes", cfg.planted.classes},
               {"input", cfg.planted.input_shape},
               {"train_samples", cfg.train_samples},
               {"mux_samples", cfg.mux_samples},
               {"val_samples", cfg.val_samples},
               {"regions", std::move(regions)},
               {"shared_fraction", cfg.planted.shared_fraction},
               {"unsolvable_fraction", cfg.planted.unsolvable_fraction},
               {"noise", cfg.planted.noise}};
  j["train"] = {{"alpha", cfg.train.alpha},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"mux_alpha", cfg.train.mux_alpha},
                {"mux_epochs", cfg.train.mux_epochs},
                {"lambda_distill", cfg.train.lambda_distill},
                {"contrastive_into_backbone", cfg.train.contrastive_into_backbone}};
  j["loss"] = {{"literal_eq2", cfg.literal_eq2}};
  const char* mode = cfg.policy.mode == RoutePolicy::Mode::Single
                         ? "single"
                         : (cfg.policy.mode == RoutePolicy::Mode::Ensemble ? "ensemble" : "binary_offload");
  j["router"] = {{"mode", mode},
                 {"threshold", cfg.policy.threshold},
                 {"offload_threshold", cfg.policy.offload_threshold},
                 {"weighted_average", cfg.policy.weighted_average}};
  j["cost"] = {{"profile", cfg.cost.profile},
               {"device_gflops", cfg.cost.device_gflops},
               {"cloud_gflops", cfg.cost.cloud_gflops},
               {"uplink_mbps", cfg.cost.uplink_mbps},
               {"downlink_mbps", cfg.cost.downlink_mbps},
               {"payload_bytes", cfg.cost.payload_bytes},
               {"download_bytes", cfg.cost.download_bytes},
               {"radio_power_mw", cfg.cost.radio_power_mw},
               {"mobile_mj_per_gflop", cfg.cost.mobile_mj_per_gflop}};
  j["eval"] = {{"export_pca", cfg.eval.export_pca}};
  return j.dump(2);
}

}  // namespace mux
