#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "painforge/cli/commands.hpp"
#include "painforge/cli/run_config.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/eval/metrics.hpp"
#include "painforge/model/vitpain.hpp"
#include "painforge/synth/au.hpp"
#include "painforge/synth/dataset.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace painforge;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const DoubleArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const int> view(const IntArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

Tensor to_tensor(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_vector(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict build_result_dict(const BuildResult& br) {
  py::dict d;
  d["manifest_path"] = br.manifest_path;
  d["frames"] = br.frames;
  d["heatmaps"] = br.heatmaps;
  d["identities_built"] = br.identities_built;
  d["identities_skipped"] = br.identities_skipped;
  d["manifest_hash"] = br.manifest_hash;
  return d;
}

}  // namespace

PYBIND11_MODULE(_painforge, m) {
  m.doc() = "painforge core bindings";

  auto error = py::register_exception<Error>(m, "PainforgeError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", error.ptr());
  py::register_exception<LabelError>(m, "LabelError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", error.ptr());

  m.def(
      "pspi_score",
      [](std::array<double, kNumAus> au) { return pspi_score(AUVector{au}); }, py::arg("au"),
      "PSPI from (AU4, AU6, AU7, AU9, AU10, AU43) intensities.");
  m.def(
      "sample_au_config", [](int pspi, std::uint64_t seed) { return sample_au_config(pspi, seed).values; },
      py::arg("pspi"), py::arg("seed"));

  m.def(
      "build_dataset",
      [](const fs::path& out_dir, std::size_t identities, std::size_t expressions, std::size_t views,
         std::size_t resolution, std::uint64_t seed, bool resume, std::size_t workers) {
        DatasetSpec spec;
        spec.identities = identities;
        spec.expressions_per_identity = expressions;
        spec.yaws = default_yaws(views);
        spec.resolution = resolution;
        spec.seed = seed;
        py::gil_scoped_release release;
        return build_dataset(spec, out_dir, resume, workers);
      },
      py::arg("out_dir"), py::arg("identities"), py::arg("expressions"), py::arg("views") = 1,
      py::arg("resolution") = 64, py::arg("seed") = 0, py::arg("resume") = false, py::arg("workers") = 1);
  py::class_<BuildResult>(m, "BuildResult")
      .def_readonly("manifest_path", &BuildResult::manifest_path)
      .def_readonly("frames", &BuildResult::frames)
      .def_readonly("heatmaps", &BuildResult::heatmaps)
      .def_readonly("identities_built", &BuildResult::identities_built)
      .def_readonly("identities_skipped", &BuildResult::identities_skipped)
      .def_readonly("manifest_hash", &BuildResult::manifest_hash)
      .def("as_dict", &build_result_dict);

  m.def(
      "binary_auroc", [](const DoubleArray& s, const IntArray& y) { return binary_auroc(view(s), view(y)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "macro_auroc",
      [](const DoubleArray& probs, const IntArray& labels) {
        if (probs.ndim() != 2) throw DimensionError("probs must be [N, classes]");
        return macro_auroc(view(probs), static_cast<std::size_t>(probs.shape(1)), view(labels));
      },
      py::arg("probs"), py::arg("labels"));
  m.def(
      "tolerance_accuracy",
      [](const IntArray& p, const IntArray& l, int tol) { return tolerance_accuracy(view(p), view(l), tol); },
      py::arg("preds"), py::arg("labels"), py::arg("tol"));
  m.def(
      "binarize_pspi", [](const IntArray& l, int t) { return binarize_pspi(view(l), t); }, py::arg("labels"),
      py::arg("threshold"));
  m.def(
      "f1_binary", [](const IntArray& p, const IntArray& l) { return f1_binary(view(p), view(l)); },
      py::arg("preds"), py::arg("labels"));
  m.def(
      "subject_kfold",
      [](const std::vector<int>& ids, std::size_t k, std::uint64_t seed) { return subject_kfold(ids, k, seed).folds; },
      py::arg("subject_ids"), py::arg("k"), py::arg("seed"));

  m.def(
      "au_cross_attention",
      [](const DoubleArray& patches, const DoubleArray& queries) {
        const auto [f, alpha] = au_cross_attention(to_tensor(patches), to_tensor(queries));
        return py::make_tuple(to_array(f), to_array(alpha));
      },
      py::arg("patches"), py::arg("queries"), "Returns (features [B,6,D], attention [B,6,N]).");

  m.def(
      "load_checkpoint_config",
      [](const fs::path& dir) {
        const auto ck = load_checkpoint(dir);
        return std::make_pair(config_to_json(ck.config), ck.metadata_json);
      },
      py::arg("dir"), "(config JSON, metadata JSON) of a checkpoint directory.");

  m.def(
      "config_hash", [](const std::string& text) { return config_hash(parse_run_config(text)); }, py::arg("text"),
      "Hash of a run config given as key = value text.");

  m.def(
      "generate",
      [](const fs::path& config, std::optional<std::uint64_t> seed, std::optional<fs::path> out, bool resume) {
        GenerateArgs a{config, seed, out, resume};
        std::ostringstream log;
        BuildResult br;
        {
          py::gil_scoped_release release;
          br = cmd_generate(a, log);
        }
        return py::make_tuple(br, log.str());
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(), py::arg("resume") = false,
      "Returns (BuildResult, log text).");
  m.def(
      "train",
      [](const fs::path& config, const std::string& role, const fs::path& data, std::optional<fs::path> teacher,
         std::optional<fs::path> out, std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs) {
        TrainArgs a;
        a.config = config;
        a.role = parse_role(role);
        a.data = data;
        a.teacher = teacher;
        a.out = out;
        a.seed = seed;
        a.epochs = epochs;
        std::ostringstream log;
        fs::path path;
        {
          py::gil_scoped_release release;
          path = cmd_train(a, log);
        }
        return py::make_tuple(path, log.str());
      },
      py::arg("config"), py::arg("role"), py::arg("data"), py::arg("teacher") = py::none(), py::arg("out") = py::none(),
      py::arg("seed") = py::none(), py::arg("epochs") = py::none(), "Returns (checkpoint dir, log text).");
  m.def(
      "evaluate",
      [](const std::vector<fs::path>& checkpoints, const fs::path& data, std::size_t folds,
         std::optional<std::vector<int>> thresholds, std::optional<fs::path> out) {
        EvaluateArgs a;
        a.checkpoints = checkpoints;
        a.data = data;
        a.folds = folds;
        a.thresholds = thresholds;
        a.out = out;
        std::ostringstream log;
        fs::path path;
        {
          py::gil_scoped_release release;
          path = cmd_evaluate(a, log);
        }
        return py::make_tuple(read_file(path), log.str());
      },
      py::arg("checkpoints"), py::arg("data"), py::arg("folds") = 0, py::arg("thresholds") = py::none(),
      py::arg("out") = py::none(), "Returns (report JSON text, log text).");
  m.def(
      "pipeline",
      [](const fs::path& config, std::optional<fs::path> out, bool resume) {
        PipelineArgs a;
        a.config = config;
        a.out = out;
        a.resume = resume;
        std::ostringstream log;
        fs::path path;
        {
          py::gil_scoped_release release;
          path = cmd_pipeline(a, log);
        }
        return py::make_tuple(read_file(path), log.str());
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("resume") = false,
      "Returns (comparison report JSON text, log text).");
}
