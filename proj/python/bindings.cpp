#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "mux/config.hpp"
#include "mux/contrastive.hpp"
#include "mux/costsim.hpp"
#include "mux/errors.hpp"
#include "mux/model.hpp"
#include "mux/multiplexer.hpp"
#include "mux/pipeline.hpp"
#include "mux/rng.hpp"
#include "mux/router.hpp"
#include "mux/tensor.hpp"

namespace py = pybind11;

namespace {

mux::Tensor to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  std::vector<float> data(a.data(), a.data() + a.size());
  return mux::Tensor::from(std::move(shape), std::move(data));
}

py::array_t<float> to_numpy(const mux::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_native, m) {
  m.doc() = "runtime deep-model multiplexing: tensor kernels, contrastive and "
            "stacking losses, routing and the deployment cost model";

  py::register_exception<mux::ConfigError>(m, "ConfigError");
  py::register_exception<mux::IoError>(m, "IoError");
  py::register_exception<mux::NumericError>(m, "NumericError");

  // tensor kernels
  m.def("matmul", [](const FloatArray& a, const FloatArray& b) { return to_numpy(mux::matmul(to_tensor(a), to_tensor(b))); });
  m.def("conv2d", [](const FloatArray& x, const FloatArray& k, int stride) {
    return to_numpy(mux::conv2d(to_tensor(x), to_tensor(k), stride));
  }, py::arg("x"), py::arg("kernels"), py::arg("stride") = 1);
  m.def("relu", [](const FloatArray& x) { return to_numpy(mux::relu(to_tensor(x))); });
  m.def("softmax", [](const FloatArray& x) { return to_numpy(mux::softmax(to_tensor(x))); });
  m.def("l2_normalize", [](const FloatArray& x) { return to_numpy(mux::l2_normalize(to_tensor(x))); });
  m.def("cross_entropy", [](const FloatArray& logits, int label) { return mux::cross_entropy(to_tensor(logits), label); });

  py::class_<mux::Rng>(m, "Rng", "SplitMix64 stream; identical draws for identical seeds on every platform")
      .def(py::init<std::uint64_t>())
      .def("next_u64", &mux::Rng::next_u64)
      .def("next_float", &mux::Rng::next_float)
      .def("next_double", &mux::Rng::next_double)
      .def("normal", &mux::Rng::normal, py::arg("mean") = 0.0f, py::arg("stddev") = 1.0f)
      .def_static("derive", &mux::Rng::derive);

  // contrastive machinery
  m.def("pair_coefficient", &mux::pair_coefficient);
  m.def("cosine_distance", [](const FloatArray& a, const FloatArray& b) {
    return mux::cosine_distance(to_tensor(a), to_tensor(b));
  });
  m.def("contrastive_loss", [](const std::vector<FloatArray>& embeddings, const std::vector<int>& preds,
                               int label, bool literal_eq2) {
    std::vector<mux::Tensor> e;
    for (const auto& a : embeddings) e.push_back(to_tensor(a));
    mux::ContrastiveOptions opt;
    opt.literal_eq2 = literal_eq2;
    return mux::contrastive_loss(e, preds, label, opt);
  }, py::arg("embeddings"), py::arg("preds"), py::arg("label"), py::arg("literal_eq2") = false);

  // stacking / multiplexing
  m.def("mux_weights", [](const FloatArray& meta, const FloatArray& v, const std::vector<double>& costs) {
    const mux::MuxOutput out = mux::mux_weights(to_tensor(meta), to_tensor(v), costs);
    return py::make_tuple(to_numpy(out.weights), to_numpy(out.logits));
  }, py::arg("meta"), py::arg("v"), py::arg("costs"));
  m.def("ensemble_predict", [](const FloatArray& w, const std::vector<FloatArray>& logits) {
    std::vector<mux::Tensor> l;
    for (const auto& a : logits) l.push_back(to_tensor(a));
    return to_numpy(mux::ensemble_predict(to_tensor(w), l));
  });
  m.def("mux_loss", [](const FloatArray& y_ens, int label) { return mux::mux_loss(to_tensor(y_ens), label); });

  // routing
  m.def("select_single", [](const FloatArray& w, const std::vector<double>& costs) {
    return mux::select_single(to_tensor(w), costs);
  }, py::arg("weights"), py::arg("costs") = std::vector<double>{});
  m.def("select_ensemble", [](const FloatArray& w, double threshold) {
    return mux::select_ensemble(to_tensor(w), threshold);
  }, py::arg("weights"), py::arg("threshold") = 0.288);
  m.def("offload_decision", &mux::offload_decision, py::arg("w_cloud"), py::arg("threshold") = 0.5);

  // cost model
  py::class_<mux::CostTerms>(m, "CostTerms")
      .def(py::init<>())
      .def(py::init([](double lat, double e, double f) { return mux::CostTerms{lat, e, f}; }),
           py::arg("latency_ms") = 0.0, py::arg("energy_mj") = 0.0, py::arg("flops") = 0.0)
      .def_readwrite("latency_ms", &mux::CostTerms::latency_ms)
      .def_readwrite("energy_mj", &mux::CostTerms::energy_mj)
      .def_readwrite("flops", &mux::CostTerms::flops)
      .def("__repr__", [](const mux::CostTerms& t) {
        return "CostTerms(latency_ms=" + std::to_string(t.latency_ms) + ", energy_mj=" + std::to_string(t.energy_mj) +
               ", flops=" + std::to_string(t.flops) + ")";
      });
  py::class_<mux::CostProfile>(m, "CostProfile")
      .def(py::init<>())
      .def_readwrite("mobile_compute", &mux::CostProfile::mobile_compute)
      .def_readwrite("cloud_compute", &mux::CostProfile::cloud_compute)
      .def_readwrite("mux", &mux::CostProfile::mux)
      .def_readwrite("upload", &mux::CostProfile::upload)
      .def_readwrite("download", &mux::CostProfile::download)
      .def_readwrite("cloud_models", &mux::CostProfile::cloud_models);
  m.def("cost_mobile_only", &mux::cost_mobile_only);
  m.def("cost_cloud_only", &mux::cost_cloud_only);
  m.def("cost_hybrid", &mux::cost_hybrid, py::arg("profile"), py::arg("fraction_local"));
  m.def("cost_cloud_hybrid", &mux::cost_cloud_hybrid, py::arg("model_costs"), py::arg("called"));
  m.def("published_mobile_cloud_profile", &mux::published_mobile_cloud_profile);
  m.def("replay_table2_expected_gflops", [] { return mux::replay_table2().expected_flops / 1e9; });
  m.def("expertise_matrix", &mux::expertise_matrix);

  // data + model helpers
  m.def("count_flops_json", [](const std::string& arch_json) {
    return mux::count_flops(mux::Architecture::from_json(arch_json));
  }, "FLOPs of one forward pass for an architecture descriptor (JSON)");
  m.def("generate_planted", [](int classes, int train_samples, std::uint64_t seed) {
    mux::PlantedSpec spec = mux::default_planted_spec(seed);
    spec.classes = classes;
    const mux::PlantedDataset d = mux::generate_planted(spec, train_samples, mux::Rng::derive(seed, "data.train"), "train");
    py::dict out;
    out["inputs"] = to_numpy(d.data.inputs);
    out["labels"] = py::cast(d.data.labels);
    out["region"] = py::cast(d.region);
    out["hardness"] = py::cast(d.hardness);
    return out;
  }, py::arg("classes") = 10, py::arg("samples") = 256, py::arg("seed") = 1);

  // whole-pipeline drivers (same entry points the CLI uses)
  auto with_paths = [](const std::string& out_dir) { return mux::RunPaths{std::filesystem::path(out_dir)}; };
  m.def("default_config_json", [] { return mux::config_to_json(mux::default_config()); });
  m.def("run_gen_data", [with_paths](const std::string& config_path, const std::string& out_dir) {
    mux::run_gen_data(config_path.empty() ? mux::default_config() : mux::load_config(config_path), with_paths(out_dir));
  }, py::arg("config_path") = std::string(), py::arg("out_dir") = "runs/default");
  m.def("run_train_zoo", [with_paths](const std::string& config_path, const std::string& out_dir) {
    mux::run_train_zoo(config_path.empty() ? mux::default_config() : mux::load_config(config_path), with_paths(out_dir));
  }, py::arg("config_path") = std::string(), py::arg("out_dir") = "runs/default");
  m.def("run_train_mux", [with_paths](const std::string& config_path, const std::string& out_dir) {
    mux::run_train_mux(config_path.empty() ? mux::default_config() : mux::load_config(config_path), with_paths(out_dir));
  }, py::arg("config_path") = std::string(), py::arg("out_dir") = "runs/default");
  m.def("run_evaluate", [with_paths](const std::string& config_path, const std::string& out_dir) {
    mux::run_evaluate(config_path.empty() ? mux::default_config() : mux::load_config(config_path), with_paths(out_dir));
  }, py::arg("config_path") = std::string(), py::arg("out_dir") = "runs/default");
  m.def("run_simulate", [with_paths](const std::string& config_path, const std::string& out_dir) {
    mux::run_simulate(config_path.empty() ? mux::default_config() : mux::load_config(config_path), with_paths(out_dir));
  }, py::arg("config_path") = std::string(), py::arg("out_dir") = "runs/default");

  m.attr("__version__") = "0.1.0";
}
