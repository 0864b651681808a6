#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "altinc/config.hpp"
#include "altinc/error.hpp"
#include "altinc/io.hpp"
#include "altinc/log.hpp"
#include "altinc/metrics.hpp"
#include "altinc/pipeline.hpp"
#include "altinc/pseudo.hpp"
#include "altinc/source_select.hpp"

namespace py = pybind11;
using namespace altinc;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

F64 to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F64 out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

LabelMap to_labels(const U8& a) {
  if (a.ndim() != 2) throw ShapeError("label map must be a 2-d uint8 array");
  return LabelMap(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8 to_array(const LabelMap& m) {
  U8 out({static_cast<py::ssize_t>(m.height()), static_cast<py::ssize_t>(m.width())});
  std::copy(m.labels().begin(), m.labels().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const metrics::EvalReport& r) {
  py::dict d;
  d["iou"] = r.iou;
  d["miou_shared"] = r.miou_shared;
  d["miou_private"] = r.miou_private;
  d["accuracy"] = r.accuracy;
  return d;
}

config::RunConfig config_from(const std::string& text, const std::map<std::string, std::string>& overrides) {
  auto cfg = config::parse(text);
  for (const auto& [k, v] : overrides) config::set(cfg, k, v);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(altinc, m) {
  m.doc() = "Multi-source boundless domain adaptation on toy segmentation scenes";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValueError>(m, "ValueError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.def("set_log_level", [](const std::string& level) {
    if (level == "error") log::set_level(log::Level::Error);
    else if (level == "info") log::set_level(log::Level::Info);
    else if (level == "debug") log::set_level(log::Level::Debug);
    else throw ConfigError("log level must be error, info or debug");
  });

  m.def(
      "config_text", [](const std::string& text, const std::map<std::string, std::string>& overrides) {
        return config::to_text(config_from(text, overrides));
      },
      py::arg("text") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      "Resolved configuration in canonical `key = value` form.");

  m.def(
      "generate",
      [](const std::string& text, const std::map<std::string, std::string>& overrides) {
        const auto d = pipeline::generate_data(config_from(text, overrides));
        auto domain = [](const synth::DomainDataset& ds) {
          py::list images, labels;
          for (const auto& s : ds.scenes) {
            images.append(to_array(s.image));
            labels.append(to_array(s.gt));
          }
          return py::make_tuple(images, labels);
        };
        py::list sources;
        for (const auto& s : d.sources) sources.append(domain(s));
        return py::make_tuple(sources, domain(d.target));
      },
      py::arg("text") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      "In-memory datasets: ([(images, labels) per source], (images, labels) for the target).");

  m.def("softmax", [](const F64& logits) {
    ad::Tape t;
    return to_array(ad::softmax_channels(t.constant(to_tensor(logits))).value());
  });

  m.def("pseudo_labels", [](const F64& probs) {
    const auto y = pseudo::generate_pseudo_labels(ProbMap(to_tensor(probs)));
    F64 conf({static_cast<py::ssize_t>(y.labels.height()), static_cast<py::ssize_t>(y.labels.width())});
    std::copy(y.confidence.begin(), y.confidence.end(), conf.mutable_data());
    return py::make_tuple(to_array(y.labels), conf);
  });

  m.def(
      "boundless_relabel",
      [](const F64& probs, std::size_t num_closed, const std::map<std::uint8_t, std::vector<std::uint8_t>>& open,
         double fraction) {
        const auto y = pseudo::generate_pseudo_labels(ProbMap(to_tensor(probs)));
        pseudo::OpenSetSpec spec;
        spec.num_closed = num_closed;
        for (const auto& [id, similar] : open) spec.open.push_back({id, similar});
        spec.tau = pseudo::resolve_tau(std::span(&y, 1), num_closed, fraction);
        pseudo::RelabelStats st;
        auto out = pseudo::boundless_relabel(y, spec, &st);
        return py::make_tuple(to_array(out), spec.tau, st.relabeled);
      },
      py::arg("probs"), py::arg("num_closed"), py::arg("open"), py::arg("fraction") = 0.85,
      "Threshold relabeling of one map with thresholds resolved from that map.");

  m.def("select_best_source", [](const std::vector<double>& d) { return select::select_best_source(d); });
  m.def(
      "distillation_weights",
      [](const std::vector<double>& d, std::size_t best, double beta) { return select::distillation_weights(d, best, beta); },
      py::arg("d"), py::arg("best"), py::arg("beta") = 5.0);

  m.def(
      "evaluate",
      [](const std::vector<U8>& pred, const std::vector<U8>& gt, std::size_t num_classes,
         const std::vector<std::size_t>& shared, const std::vector<std::size_t>& private_classes) {
        if (pred.size() != gt.size()) throw ShapeError("prediction and ground-truth counts differ");
        metrics::ConfusionMatrix cm(num_classes);
        for (std::size_t i = 0; i < pred.size(); ++i) cm.accumulate(to_labels(pred[i]), to_labels(gt[i]));
        return report_dict(metrics::iou_report(cm, shared, private_classes));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"), py::arg("shared"),
      py::arg("private_classes") = std::vector<std::size_t>{});

  m.def("load_probmap", [](const std::filesystem::path& p) { return to_array(io::load_probmap(p).tensor()); });
  m.def("save_probmap", [](const std::filesystem::path& p, const F64& a) { io::save_probmap(p, ProbMap(to_tensor(a))); });
  m.def("read_labels", [](const std::filesystem::path& p) { return to_array(pipeline::read_label_dump(p)); });

  m.def(
      "run",
      [](const std::filesystem::path& run_dir, const std::string& text,
         const std::map<std::string, std::string>& overrides) {
        const auto cfg = config_from(text, overrides);
        py::gil_scoped_release release;
        pipeline::cmd_run(cfg, run_dir);
      },
      py::arg("run_dir"), py::arg("text") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      "Runs gen, pretrain, select, altinc, boundless and eval into run_dir.");
}
