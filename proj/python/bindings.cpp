#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fcncd/checkpoint.hpp"
#include "fcncd/dataset_io.hpp"
#include "fcncd/error.hpp"
#include "fcncd/metrics.hpp"
#include "fcncd/ranking_loss.hpp"
#include "fcncd/simulator.hpp"
#include "fcncd/training.hpp"

namespace py = pybind11;
using namespace fcncd;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
  if (obj.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::array_t<double> to_numpy(const Array& a) {
  std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
  py::array_t<double> out(shape);
  std::copy(a.values().begin(), a.values().end(), out.mutable_data());
  return out;
}

Array from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Array(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

RankVector ranks_of(BlockType type, std::vector<int> values) {
  RankVector r{type, std::move(values)};
  if (auto why = rank_vector_violation(r)) throw ValidationError(*why);
  return r;
}

// Owning handle so Python can keep a trained model around.
struct PyModel {
  std::shared_ptr<RankingModel> model;
  json extra;
};

TrainConfig train_config(const std::optional<std::string>& profile, const py::dict& overrides) {
  TrainConfig c = profile ? TrainConfig::profile(*profile) : TrainConfig{};
  json j = c.to_json();
  const json given = from_py(overrides);
  for (const auto& [key, value] : given.items()) {
    if (!j.contains(key)) throw ValidationError("unknown training option '" + key + "'");
    j[key] = value;
  }
  c = TrainConfig::from_json(j);
  validate(c);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forced-choice neural cognitive diagnosis";

  static py::exception<Error> base(m, "Error", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  py::class_<ResponseDataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("manifest"))
      .def("save", [](const ResponseDataset& ds, const std::filesystem::path& dir, const std::string& name) {
             return save_dataset(ds, dir, name);
           }, py::arg("directory"), py::arg("name") = "dataset")
      .def_readonly("num_participants", &ResponseDataset::num_participants)
      .def_readonly("num_items", &ResponseDataset::num_items)
      .def_readonly("num_dimensions", &ResponseDataset::num_dimensions)
      .def_property_readonly("num_blocks", &ResponseDataset::num_blocks)
      .def_property_readonly("block_size", &ResponseDataset::block_size)
      .def_property_readonly("block_type", [](const ResponseDataset& ds) { return std::string(to_string(ds.block_type)); })
      .def_property_readonly("num_records", [](const ResponseDataset& ds) { return ds.records.size(); })
      .def("block_items", [](const ResponseDataset& ds, std::size_t b) { return ds.blocks.at(b).items; })
      .def("records", [](const ResponseDataset& ds) {
        py::list out;
        for (const auto& r : ds.records) out.append(py::make_tuple(r.participant, r.block, r.ranks.values));
        return out;
      })
      .def("violations", [](const ResponseDataset& ds) {
        py::list out;
        for (const auto& v : fcncd::validate(ds)) out.append(py::make_tuple(v.where, v.rule));
        return out;
      })
      .def("rank_sums", [](const ResponseDataset& ds) { return to_numpy(rank_sums(ds)); });

  m.def("simulate", [](py::object config) {
    const SimConfig c = SimConfig::from_json(from_py(config));
    SimResult sim = generate(c);
    return py::make_tuple(std::move(sim.dataset), to_numpy(sim.truth.theta));
  }, py::arg("config") = py::none(),
     "Returns (dataset, true trait matrix). `config` is a dict of simulation settings.");

  m.def("simulation_defaults", [] { return to_py(SimConfig{}.to_json()); });

  m.def("encode_response", [](const std::string& type, std::size_t t, std::optional<std::size_t> chosen,
                              std::optional<std::vector<std::size_t>> order, std::optional<std::size_t> most,
                              std::optional<std::size_t> least) {
    const BlockType bt = parse_block_type(type);
    RawChoice raw;
    if (bt == BlockType::Pick) {
      if (!chosen) throw ValidationError("PICK needs chosen=");
      raw = PickChoice{*chosen};
    } else if (bt == BlockType::Rank) {
      if (!order) throw ValidationError("RANK needs order=");
      raw = RankOrder{*order};
    } else {
      if (!most || !least) throw ValidationError("MOLE needs most= and least=");
      raw = MoleChoice{*most, *least};
    }
    return encode_response(bt, t, raw).values;
  }, py::arg("type"), py::arg("t"), py::kw_only(), py::arg("chosen") = py::none(), py::arg("order") = py::none(),
     py::arg("most") = py::none(), py::arg("least") = py::none());

  m.def("weighted_bpr_pair", &weighted_bpr_pair, py::arg("y_i"), py::arg("y_j"), py::arg("r_i"), py::arg("r_j"),
        py::arg("lam"));
  m.def("original_bpr_pair", &original_bpr_pair, py::arg("y_i"), py::arg("y_j"), py::arg("r_i"), py::arg("r_j"));
  m.def("block_loss", [](std::vector<double> scores, std::vector<int> ranks, const std::string& type,
                         const std::string& loss, double lam) {
    return block_loss(scores, ranks_of(parse_block_type(type), std::move(ranks)), {parse_loss_kind(loss), lam});
  }, py::arg("scores"), py::arg("ranks"), py::arg("type") = "MOLE", py::arg("loss") = "weighted-bpr",
     py::arg("lam") = 1.0);

  m.def("pra", [](const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& ranks,
                  const std::string& type) {
    std::vector<RankVector> truth;
    for (const auto& r : ranks) truth.push_back(ranks_of(parse_block_type(type), r));
    return pra(scores, truth);
  }, py::arg("scores"), py::arg("ranks"), py::arg("type") = "MOLE");
  m.def("lra", [](const std::vector<std::vector<int>>& predicted, const std::vector<std::vector<int>>& ranks,
                  const std::string& type) {
    const BlockType bt = parse_block_type(type);
    std::vector<RankVector> p, t;
    for (const auto& r : predicted) p.push_back({bt, r});
    for (const auto& r : ranks) t.push_back(ranks_of(bt, r));
    return lra(p, t);
  }, py::arg("predicted"), py::arg("ranks"), py::arg("type") = "MOLE");
  m.def("rank_scores", [](std::vector<double> scores, const std::string& type) {
    return rank_scores(scores, parse_block_type(type)).values;
  }, py::arg("scores"), py::arg("type") = "MOLE");
  m.def("doa", [](py::array_t<double, py::array::c_style | py::array::forcecast> abilities,
                  const ResponseDataset& ds) { return doa(from_numpy(abilities), ds); },
        py::arg("abilities"), py::arg("dataset"));

  m.def("profile", [](const std::string& name) { return to_py(TrainConfig::profile(name).to_json()); });
  m.def("model_names", &model_names);

  py::class_<PyModel>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) {
        Checkpoint ck = load_checkpoint(p);
        return PyModel{std::move(ck.model), ck.extra};
      }, py::arg("path"))
      .def("save", [](const PyModel& pm, const std::filesystem::path& p) { save_checkpoint(*pm.model, p, pm.extra); })
      .def_property_readonly("kind", [](const PyModel& pm) { return pm.model->kind(); })
      .def_property_readonly("config", [](const PyModel& pm) { return to_py(pm.model->config()); })
      .def_property_readonly("metadata", [](const PyModel& pm) { return to_py(pm.extra); })
      .def("abilities", [](const PyModel& pm) -> py::object {
        auto a = pm.model->abilities();
        return a ? py::object(to_numpy(*a)) : py::none();
      })
      .def("score_block", [](const PyModel& pm, std::size_t participant, std::vector<std::size_t> items) {
        return predict_block(*pm.model, participant, ItemBlock{0, std::move(items)});
      }, py::arg("participant"), py::arg("items"))
      .def("evaluate", [](const PyModel& pm, const ResponseDataset& ds) {
        return to_py(evaluate(*pm.model, ds, &ds).to_json());
      }, py::arg("dataset"));

  m.def("train", [](const ResponseDataset& ds, const std::string& model, std::optional<std::string> profile,
                    py::object model_config, py::kwargs options) {
    const TrainConfig c = train_config(profile, options);
    const ModelSpec spec = resolve_model(model, from_py(model_config));
    TrainingRun run = [&] {
      py::gil_scoped_release release;
      return run_training(spec, ds, c);
    }();
    TrainConfig stored = c;
    if (spec.loss) stored.loss = spec.loss;
    PyModel pm{std::move(run.model), {{"model", spec.name}, {"train_config", stored.to_json()}}};
    json report = run.report.to_json();
    report["training"] = run.result.to_json();
    return py::make_tuple(std::move(pm), to_py(report));
  }, py::arg("dataset"), py::arg("model") = "fcncd", py::arg("profile") = py::none(),
     py::arg("model_config") = py::none(),
     "Splits, trains with early stopping and evaluates. Extra keyword arguments override training options "
     "(seed, max_epochs, learning_rate, ...). Returns (model, report).");
}
