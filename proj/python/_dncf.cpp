// Python bindings for the dncf core library.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "dncf/checkpoint.hpp"
#include "dncf/config.hpp"
#include "dncf/data.hpp"
#include "dncf/error.hpp"
#include "dncf/eval.hpp"
#include "dncf/models.hpp"
#include "dncf/synthetic.hpp"
#include "dncf/train.hpp"

namespace py = pybind11;
using namespace dncf;

namespace {

RunConfig make_config(const py::dict& options) {
  const auto text = py::module_::import("json").attr("dumps")(options).cast<std::string>();
  RunConfig config;
  apply_json(config, nlohmann::json::parse(text));
  config.validate();
  return config;
}

py::dict config_dict(const RunConfig& config) {
  return py::module_::import("json").attr("loads")(to_json(config).dump());
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["split"] = r.split;
  d["loss"] = r.loss ? py::cast(*r.loss) : py::none();
  d["hr"] = r.hr;
  d["ndcg"] = r.ndcg;
  d["users"] = r.users;
  d["seconds"] = r.seconds;
  return d;
}

// A model together with the interaction store whose histories it reads.
struct BoundModel {
  Model model;
  InteractionStore store;

  double score(Index u, Index i) const { return model.score(store, u, i); }

  std::vector<double> score_items(Index u, const std::vector<Index>& items) const {
    return model.score_items(store, u, items);
  }

  py::dict evaluate(const Dataset& dataset, std::size_t k_max) const {
    EvalOptions options;
    options.k_max = k_max;
    return report_dict(dncf::evaluate(model, store, dataset.tests, options));
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const Parameter* p : model.parameters()) names.push_back(p->name);
    return names;
  }

  std::vector<std::vector<double>> parameter(const std::string& name) const {
    for (const Parameter* p : model.parameters()) {
      if (p->name != name) continue;
      std::vector<std::vector<double>> rows(p->value.rows());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row = p->value.row(r);
        rows[r].assign(row.begin(), row.end());
      }
      return rows;
    }
    throw py::key_error("no parameter named '" + name + "'");
  }

  void save(const std::filesystem::path& path) const {
    save_checkpoint(path, model.to_checkpoint());
  }
};

py::dict train_dict(const RunConfig& config, const Dataset& dataset, TrainResult&& r) {
  py::dict d;
  d["test"] = report_dict(r.test);
  py::list reports;
  for (const auto& rep : r.reports) reports.append(report_dict(rep));
  d["reports"] = reports;
  d["epochs_run"] = r.epochs_run;
  d["epoch_losses"] = r.epoch_losses;
  d["best_epoch"] = r.best_epoch;
  d["best_selection_hr"] = r.best_selection_hr;
  d["seconds"] = r.seconds;
  d["model"] = BoundModel{std::move(r.model), evaluation_store(config, dataset)};
  return d;
}

}  // namespace

PYBIND11_MODULE(_dncf, m) {
  m.doc() = "Dual-embedding neural collaborative filtering";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", data_error.ptr());
  py::register_exception<FusionError>(m, "FusionError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.attr("TOP_K") = kDefaultTopK;
  m.attr("TEST_NEGATIVES") = kTestNegatives;

  py::class_<TestInstance>(m, "TestInstance")
      .def_readonly("user", &TestInstance::user)
      .def_readonly("positive_item", &TestInstance::positive_item)
      .def_readonly("negative_items", &TestInstance::negative_items);

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& prefix) { return load_dataset(prefix); },
                  py::arg("prefix"))
      .def_static(
          "synthetic",
          [](std::size_t users, std::size_t items, std::size_t clusters, std::size_t per_user,
             std::uint64_t seed) {
            SyntheticOptions o;
            o.users = users;
            o.items = items;
            o.clusters = clusters;
            o.interactions_per_user = per_user;
            o.seed = seed;
            return make_synthetic_dataset(o);
          },
          py::arg("users") = 50, py::arg("items") = 200, py::arg("clusters") = 5,
          py::arg("per_user") = 20, py::arg("seed") = 7)
      .def("write", [](const Dataset& d, const std::filesystem::path& p) { write_dataset(p, d); },
           py::arg("prefix"))
      .def_property_readonly("num_users", [](const Dataset& d) { return d.train.num_users(); })
      .def_property_readonly("num_items", [](const Dataset& d) { return d.train.num_items(); })
      .def_property_readonly("num_interactions",
                             [](const Dataset& d) { return d.train.num_interactions(); })
      .def_readonly("tests", &Dataset::tests)
      .def("user_items",
           [](const Dataset& d, Index u) {
             const auto s = d.train.user_items(u);
             return std::vector<Index>(s.begin(), s.end());
           })
      .def("item_users", [](const Dataset& d, Index i) {
        const auto s = d.train.item_users(i);
        return std::vector<Index>(s.begin(), s.end());
      });

  py::class_<BoundModel>(m, "Model")
      .def("score", &BoundModel::score, py::arg("user"), py::arg("item"))
      .def("score_items", &BoundModel::score_items, py::arg("user"), py::arg("items"))
      .def("evaluate", &BoundModel::evaluate, py::arg("dataset"),
           py::arg("k_max") = kDefaultTopK)
      .def("parameter_names", &BoundModel::parameter_names)
      .def("parameter", &BoundModel::parameter, py::arg("name"))
      .def("save", &BoundModel::save, py::arg("path"))
      .def_property_readonly("kind",
                             [](const BoundModel& b) { return std::string(to_string(b.model.spec().kind)); });

  m.def("default_config", [] { return config_dict(RunConfig{}); });

  m.def(
      "train",
      [](const py::dict& options, const Dataset& dataset) {
        const RunConfig config = make_config(options);
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return train_model(config, dataset);
        }();
        return train_dict(config, dataset, std::move(r));
      },
      py::arg("config"), py::arg("dataset"));

  m.def(
      "evaluate",
      [](const py::dict& options, const Dataset& dataset, const std::string& checkpoint,
         std::size_t k_max) {
        const RunConfig config = make_config(options);
        return report_dict(run_eval(config, dataset, checkpoint, k_max));
      },
      py::arg("config"), py::arg("dataset"), py::arg("checkpoint") = "",
      py::arg("k_max") = kDefaultTopK);

  m.def(
      "pretrain_fuse",
      [](const py::dict& dgmf, const py::dict& dmlp, const py::dict& dnmf,
         const Dataset& dataset) {
        const RunConfig g = make_config(dgmf);
        const RunConfig p = make_config(dmlp);
        const RunConfig n = make_config(dnmf);
        std::optional<PretrainResult> r;
        {
          py::gil_scoped_release release;
          r.emplace(pretrain_fuse(g, p, n, dataset));
        }
        py::dict d;
        d["dgmf"] = report_dict(r->dgmf.test);
        d["dmlp"] = report_dict(r->dmlp.test);
        d["fused_initial"] = report_dict(r->fused_initial);
        d["dnmf"] = train_dict(n, dataset, std::move(r->dnmf));
        return d;
      },
      py::arg("dgmf_config"), py::arg("dmlp_config"), py::arg("dnmf_config"),
      py::arg("dataset"));

  m.def(
      "sweep",
      [](const py::dict& options, const std::string& axis, const std::vector<std::string>& values,
         const Dataset& dataset) {
        const RunConfig config = make_config(options);
        const SweepAxis a = parse_sweep_axis(axis);
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_sweep(config, a, values, dataset);
        }
        py::list out;
        for (const auto& row : rows) {
          py::dict d;
          d["value"] = row.value;
          d["report"] = row.report ? py::object(report_dict(*row.report)) : py::none();
          d["epochs"] = row.epochs;
          d["seconds"] = row.seconds;
          d["error"] = row.error;
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("axis"), py::arg("values"), py::arg("dataset"));

  m.def("hr_at_k", &hr_at_k, py::arg("rank"), py::arg("k"));
  m.def("ndcg_at_k", &ndcg_at_k, py::arg("rank"), py::arg("k"));
}
