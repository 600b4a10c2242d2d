#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hscd/array.hpp"
#include "hscd/checkpoint.hpp"
#include "hscd/common.hpp"
#include "hscd/config.hpp"
#include "hscd/contrastive.hpp"
#include "hscd/diffusion.hpp"
#include "hscd/metrics.hpp"
#include "hscd/pipeline.hpp"
#include "hscd/pseudo_label.hpp"
#include "hscd/scene.hpp"
#include "hscd/synth.hpp"

namespace py = pybind11;
using namespace hscd;

namespace {

using DoubleInput = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const DoubleInput& a) {
  std::vector<int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return Array::from(std::move(shape), std::move(data));
}

py::array_t<double> to_numpy(const Array& a) {
  std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
  py::array_t<double> out(shape);
  std::copy(a.data(), a.data() + a.size(), out.mutable_data());
  return out;
}

py::array_t<uint8_t> grid_u8(const std::vector<uint8_t>& v, int64_t h, int64_t w) {
  py::array_t<uint8_t> out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> cube_f32(const std::vector<float>& v, int64_t c, int64_t h, int64_t w) {
  py::array_t<float> out({static_cast<py::ssize_t>(c), static_cast<py::ssize_t>(h),
                          static_cast<py::ssize_t>(w)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Rebuilds a ChangeMap from a (H, W) uint8 array so python callers can score
// arbitrary maps without touching the C++ container types.
ChangeMap map_from_numpy(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
  require(a.ndim() == 2, "change map array must be 2-D (H, W)");
  ChangeMap m;
  m.scene_name = "python";
  m.height = a.shape(0);
  m.width = a.shape(1);
  m.decisions.assign(a.data(), a.data() + a.size());
  for (uint8_t v : m.decisions) require(v <= 1, "change map values must be 0 or 1");
  return m;
}

}  // namespace

PYBIND11_MODULE(hscd, m) {
  m.doc() = "Unsupervised hyperspectral change detection: diffusion denoiser, "
            "contrastive encoder, and the training/inference pipeline.";

  py::register_exception<InvariantError>(m, "InvariantError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  // Diffusion process.
  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("steps", &NoiseSchedule::steps)
      .def_readonly("beta", &NoiseSchedule::beta)
      .def_readonly("alpha", &NoiseSchedule::alpha)
      .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
      .def_readonly("sigma", &NoiseSchedule::sigma);
  m.def("make_linear_schedule", &make_linear_schedule, py::arg("steps"), py::arg("beta_start"),
        py::arg("beta_end"));
  m.def("forward_diffuse",
        [](const DoubleInput& x0, int64_t t, const DoubleInput& eps, const NoiseSchedule& s) {
          return to_numpy(forward_diffuse(to_array(x0), t, to_array(eps), s));
        },
        py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("sched"));
  m.def("estimate_x0",
        [](const DoubleInput& xt, int64_t t, const DoubleInput& eps_hat, const NoiseSchedule& s) {
          return to_numpy(estimate_x0(to_array(xt), t, to_array(eps_hat), s));
        },
        py::arg("xt"), py::arg("t"), py::arg("eps_hat"), py::arg("sched"));
  m.def("reverse_step",
        [](const DoubleInput& xt, int64_t t, const DoubleInput& eps_hat, const DoubleInput& z,
           const NoiseSchedule& s) {
          return to_numpy(reverse_step(to_array(xt), t, to_array(eps_hat), to_array(z), s));
        },
        py::arg("xt"), py::arg("t"), py::arg("eps_hat"), py::arg("z"), py::arg("sched"));
  m.def("noise_loss",
        [](const DoubleInput& eps, const DoubleInput& eps_hat) {
          return noise_loss(to_array(eps), to_array(eps_hat));
        },
        py::arg("eps"), py::arg("eps_hat"));

  m.def("nt_xent_loss",
        [](const DoubleInput& z1, const DoubleInput& z2, double tau) {
          return nt_xent_loss(to_array(z1), to_array(z2), tau);
        },
        py::arg("z1"), py::arg("z2"), py::arg("tau"));

  // Evaluation.
  py::class_<Confusion>(m, "Confusion")
      .def_readonly("tp", &Confusion::tp)
      .def_readonly("fp", &Confusion::fp)
      .def_readonly("tn", &Confusion::tn)
      .def_readonly("fn", &Confusion::fn)
      .def("total", &Confusion::total);
  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("precision", &MetricsReport::precision)
      .def_readonly("recall", &MetricsReport::recall)
      .def_readonly("oa", &MetricsReport::oa)
      .def_readonly("kc", &MetricsReport::kc)
      .def_readonly("pre", &MetricsReport::pre)
      .def_readonly("f1", &MetricsReport::f1)
      .def("__repr__", [](const MetricsReport& r) { return format_report(r); });
  m.def("confusion_counts",
        [](int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
          Confusion c;
          c.tp = tp;
          c.fp = fp;
          c.tn = tn;
          c.fn = fn;
          return c;
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));
  m.def("confusion",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& gt) {
          std::vector<uint8_t> labels(gt.data(), gt.data() + gt.size());
          return confusion(map_from_numpy(pred), labels);
        },
        py::arg("pred"), py::arg("gt"),
        "Counts agreement between a (H, W) 0/1 map and reference labels "
        "(0 unchanged, 1 changed, 2 ignored).");
  m.def("report", &report, py::arg("confusion"));
  m.def("format_report", &format_report, py::arg("report"));

  // Scenes and pseudo-labels.
  py::class_<BitemporalScene>(m, "BitemporalScene")
      .def_readonly("name", &BitemporalScene::name)
      .def_readonly("bands", &BitemporalScene::bands)
      .def_readonly("height", &BitemporalScene::height)
      .def_readonly("width", &BitemporalScene::width)
      .def_property_readonly("t1",
                             [](const BitemporalScene& s) {
                               return cube_f32(s.t1, s.bands, s.height, s.width);
                             })
      .def_property_readonly("t2",
                             [](const BitemporalScene& s) {
                               return cube_f32(s.t2, s.bands, s.height, s.width);
                             })
      .def_property_readonly("labels", [](const BitemporalScene& s) -> py::object {
        if (!s.has_labels()) return py::none();
        return grid_u8(s.labels, s.height, s.width);
      });
  m.def("load_scene", &load_scene, py::arg("path"));

  py::class_<PseudoLabelMap>(m, "PseudoLabelMap")
      .def_readonly("height", &PseudoLabelMap::height)
      .def_readonly("width", &PseudoLabelMap::width)
      .def_property_readonly("labels",
                             [](const PseudoLabelMap& p) {
                               return grid_u8(p.labels, p.height, p.width);
                             })
      .def_property_readonly("confidence", [](const PseudoLabelMap& p) {
        py::array_t<double> out({static_cast<py::ssize_t>(p.height),
                                 static_cast<py::ssize_t>(p.width)});
        std::copy(p.confidence.begin(), p.confidence.end(), out.mutable_data());
        return out;
      });
  m.def("difference_image",
        [](const BitemporalScene& s) { return to_numpy(difference_image(s)); }, py::arg("scene"));
  m.def("pca_kmeans_pseudolabel",
        [](const DoubleInput& diff, int64_t block, int64_t n_components) {
          return pca_kmeans_pseudolabel(to_array(diff), block, n_components);
        },
        py::arg("diff"), py::arg("block"), py::arg("n_components"));
  m.def("load_pseudo_map", &load_pseudo_map, py::arg("path"));
  m.def("load_change_map",
        [](const std::string& path) {
          const ChangeMap cm = load_change_map(path);
          return grid_u8(cm.decisions, cm.height, cm.width);
        },
        py::arg("path"), "Reads a stored change map as a (H, W) uint8 array.");

  // Configuration.
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("scene_path", &RunConfig::scene_path)
      .def_readwrite("seed", &RunConfig::seed)
      .def("set",
           [](RunConfig& cfg, const std::string& key, const std::string& value) {
             set_config_field(cfg, key, value, "python");
           },
           py::arg("key"), py::arg("value"),
           "Sets one field by its config-file key, e.g. set('train.epochs', '10').")
      .def("text", &config_text)
      .def("__repr__", &config_text);
  m.def("desk_profile", &desk_profile);
  m.def("load_config", &load_config, py::arg("path"));
  m.def("save_config", &save_config, py::arg("config"), py::arg("path"));

  // Pipeline commands. Each writes artifacts under out_dir and returns paths.
  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("bands", &SynthConfig::bands)
      .def_readwrite("height", &SynthConfig::height)
      .def_readwrite("width", &SynthConfig::width)
      .def_readwrite("n_materials", &SynthConfig::n_materials)
      .def_readwrite("change_fraction", &SynthConfig::change_fraction)
      .def_readwrite("noise_sigma", &SynthConfig::noise_sigma)
      .def_readwrite("seed", &SynthConfig::seed)
      .def_readwrite("name", &SynthConfig::name);
  py::class_<PretrainOutput>(m, "PretrainOutput")
      .def_readonly("checkpoint", &PretrainOutput::checkpoint)
      .def_readonly("epoch_loss", &PretrainOutput::epoch_loss);
  py::class_<TrainOutput>(m, "TrainOutput")
      .def_readonly("encoder_checkpoint", &TrainOutput::encoder_checkpoint)
      .def_readonly("head_checkpoint", &TrainOutput::head_checkpoint)
      .def_readonly("pseudo_map", &TrainOutput::pseudo_map)
      .def_readonly("epoch_loss", &TrainOutput::epoch_loss);
  py::class_<ReconstructOutput>(m, "ReconstructOutput")
      .def_readonly("t_list", &ReconstructOutput::t_list)
      .def_readonly("mse_t1", &ReconstructOutput::mse_t1)
      .def_readonly("mse_t2", &ReconstructOutput::mse_t2)
      .def_readonly("images", &ReconstructOutput::images);
  m.def("synth", &cmd_synth, py::arg("config"), py::arg("out_dir"));
  m.def("pretrain", &cmd_pretrain, py::arg("config"), py::arg("out_dir"),
        py::arg("resume_from") = "");
  m.def("train", &cmd_train, py::arg("config"), py::arg("scdm_checkpoint"), py::arg("out_dir"));
  m.def("pseudo_label", &cmd_pseudo_label, py::arg("config"), py::arg("out_dir"));
  m.def("infer", &cmd_infer, py::arg("config"), py::arg("scdm_checkpoint"),
        py::arg("encoder_checkpoint"), py::arg("head_checkpoint"), py::arg("out_dir"));
  m.def("evaluate", &cmd_evaluate, py::arg("map_path"), py::arg("scene_path"),
        py::arg("out_dir"));
  m.def("reconstruct", &cmd_reconstruct, py::arg("config"), py::arg("scdm_checkpoint"),
        py::arg("timesteps"), py::arg("out_dir"));
}
