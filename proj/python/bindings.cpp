// Python bindings for the core library.
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "crossclr/dataset.hpp"
#include "crossclr/experiment.hpp"
#include "crossclr/influence.hpp"
#include "crossclr/losses.hpp"
#include "crossclr/memory_queue.hpp"
#include "crossclr/retrieval.hpp"

namespace py = pybind11;
using namespace crossclr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error(ErrorKind::InvalidShape, "expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

EmbeddingBatch to_batch(const Array& a) { return EmbeddingBatch(to_matrix(a)); }

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::tuple loss_tuple(const LossOutput& out) {
  return py::make_tuple(out.value, to_array(out.grad_zx), to_array(out.grad_zy));
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict report_dict(const RetrievalReport& r) {
  py::dict d;
  d["recall_at"] = r.recall_at;
  d["median_rank"] = r.median_rank;
  d["mean_rank"] = r.mean_rank;
  d["ranks"] = r.ranks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-modal contrastive losses, influence scoring and retrieval metrics";

  // Released so the type object outlives interpreter teardown.
  static py::handle error_type = py::exception<Error>(m, "CrossclrError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_static("youcook2", &LossConfig::youcook2)
      .def_static("lsmdc", &LossConfig::lsmdc)
      .def_readwrite("tau", &LossConfig::tau)
      .def_readwrite("lambda_intra", &LossConfig::lambda_intra)
      .def_readwrite("gamma", &LossConfig::gamma)
      .def_readwrite("kappa", &LossConfig::kappa)
      .def_readwrite("pruning_enabled", &LossConfig::pruning_enabled)
      .def_readwrite("weighting_enabled", &LossConfig::weighting_enabled)
      .def_readwrite("intra_enabled", &LossConfig::intra_enabled)
      .def_readwrite("margin", &LossConfig::margin)
      .def_readwrite("beta", &LossConfig::beta)
      .def_readwrite("top_k", &LossConfig::top_k)
      .def_readwrite("queue_min_fill", &LossConfig::queue_min_fill)
      .def_property(
          "threshold_mode", [](const LossConfig& c) { return std::string(to_string(c.threshold_mode)); },
          [](LossConfig& c, const std::string& s) { c.threshold_mode = parse_threshold_mode(s); })
      .def_property(
          "weight_norm", [](const LossConfig& c) { return std::string(to_string(c.weight_norm)); },
          [](LossConfig& c, const std::string& s) { c.weight_norm = parse_weight_norm(s); })
      .def_property(
          "reduction", [](const LossConfig& c) { return std::string(to_string(c.reduction)); },
          [](LossConfig& c, const std::string& s) { c.reduction = parse_reduction(s); })
      .def("validate", &LossConfig::validate);

  m.def(
      "connectivity",
      [](const Array& reference, std::optional<Array> targets, bool exclude_self) {
        const auto ref = to_batch(reference);
        return connectivity(ref, targets ? to_batch(*targets) : ref, exclude_self);
      },
      py::arg("reference"), py::arg("targets") = py::none(), py::arg("exclude_self") = true);
  m.def(
      "influential_mask",
      [](const std::vector<double>& c, double gamma, const std::string& mode) {
        return influential_mask(c, gamma, parse_threshold_mode(mode));
      },
      py::arg("connectivity"), py::arg("gamma"), py::arg("mode") = "max_relative");
  m.def(
      "sample_weights",
      [](const std::vector<double>& c, double kappa, const std::string& norm) {
        return sample_weights(c, kappa, parse_weight_norm(norm));
      },
      py::arg("connectivity"), py::arg("kappa"), py::arg("norm") = "sum_to_one");

  m.def(
      "crossclr_batch",
      [](const Array& zx, const Array& zy, const Array& in_x, const Array& in_y, const LossConfig& cfg) {
        return loss_tuple(crossclr_batch(to_batch(zx), to_batch(zy), to_batch(in_x), to_batch(in_y), cfg));
      },
      py::arg("zx"), py::arg("zy"), py::arg("in_x"), py::arg("in_y"), py::arg("config") = LossConfig{});
  m.def(
      "crossclr_multipos",
      [](const Array& zx, const Array& zy, const Array& in_x, const Array& in_y, const LossConfig& cfg) {
        return loss_tuple(crossclr_multipos(to_batch(zx), to_batch(zy), to_batch(in_x), to_batch(in_y), cfg));
      },
      py::arg("zx"), py::arg("zy"), py::arg("in_x"), py::arg("in_y"), py::arg("config") = LossConfig{});
  m.def(
      "crossclr_queue",
      [](const Array& zx, const Array& zy, const Array& in_x, const Array& in_y, const MemoryQueue& q,
         const std::function<Array(Array)>& proj_x, const std::function<Array(Array)>& proj_y,
         const LossConfig& cfg) {
        const auto wrap = [](const std::function<Array(Array)>& f) -> Projector {
          return [f](const EmbeddingBatch& b) { return l2_normalize(to_batch(f(to_array(b.data())))); };
        };
        return loss_tuple(crossclr_queue(to_batch(zx), to_batch(zy), to_batch(in_x), to_batch(in_y), q,
                                         wrap(proj_x), wrap(proj_y), cfg));
      },
      py::arg("zx"), py::arg("zy"), py::arg("in_x"), py::arg("in_y"), py::arg("queue"), py::arg("project_x"),
      py::arg("project_y"), py::arg("config") = LossConfig{});
  m.def(
      "ntxent", [](const Array& zx, const Array& zy, double tau) { return loss_tuple(ntxent(to_batch(zx), to_batch(zy), tau)); },
      py::arg("zx"), py::arg("zy"), py::arg("tau"));
  m.def(
      "clip_symmetric",
      [](const Array& zx, const Array& zy, double tau) { return loss_tuple(clip_symmetric(to_batch(zx), to_batch(zy), tau)); },
      py::arg("zx"), py::arg("zy"), py::arg("tau"));
  m.def(
      "max_margin",
      [](const Array& zx, const Array& zy, double margin) {
        return loss_tuple(max_margin(to_batch(zx), to_batch(zy), margin));
      },
      py::arg("zx"), py::arg("zy"), py::arg("margin") = 0.2);

  py::class_<MemoryQueue>(m, "MemoryQueue")
      .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("capacity"), py::arg("dim_x"), py::arg("dim_y"))
      .def("enqueue", [](MemoryQueue& q, const Array& x, const Array& y) { q.enqueue(to_batch(x), to_batch(y)); })
      .def("snapshot",
           [](const MemoryQueue& q) {
             const auto [x, y] = q.snapshot();
             return py::make_tuple(to_array(x.data()), to_array(y.data()));
           })
      .def_property_readonly("capacity", &MemoryQueue::capacity)
      .def("__len__", &MemoryQueue::size);

  m.def(
      "retrieval_report",
      [](const Array& scores, const std::vector<std::size_t>& ks) {
        return report_dict(report_from_scores(to_matrix(scores), Direction::a_to_b, ks));
      },
      py::arg("scores"), py::arg("ks") = std::vector<std::size_t>{1, 5, 10});
  m.def(
      "evaluate_retrieval",
      [](const Array& zx, const Array& zy, const std::vector<std::size_t>& ks) {
        const auto [ab, ba] = evaluate_retrieval(to_batch(zx), to_batch(zy), ks);
        return py::make_tuple(report_dict(ab), report_dict(ba));
      },
      py::arg("zx"), py::arg("zy"), py::arg("ks") = std::vector<std::size_t>{1, 5, 10});

  m.def(
      "generate_synthetic",
      [](std::size_t n_pairs, std::size_t n_clusters, std::size_t d_x, std::size_t d_y, std::size_t d_latent,
         double noise_sigma, double overlap, std::uint64_t seed) {
        const auto ds = generate_synthetic({n_pairs, n_clusters, d_x, d_y, d_latent, noise_sigma, overlap, seed});
        return py::make_tuple(to_array(ds.x), to_array(ds.y), ds.cluster_id);
      },
      py::arg("n_pairs") = 2560, py::arg("n_clusters") = 32, py::arg("d_x") = 64, py::arg("d_y") = 48,
      py::arg("d_latent") = 16, py::arg("noise_sigma") = 0.3, py::arg("overlap") = 0.4, py::arg("seed") = 0);

  m.def(
      "run_command",
      [](const std::string& command, const py::object& config, const std::filesystem::path& out_dir) {
        const ExperimentConfig c = apply_config_json(config.is_none() ? nlohmann::json::object() : from_python(config));
        const CommandOutcome outcome = run_command(command, c, out_dir);
        py::dict d;
        d["exit_code"] = outcome.exit_code;
        d["report_path"] = outcome.report_path.string();
        d["report"] = to_python(outcome.report);
        return d;
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("out_dir") = "runs");
}
