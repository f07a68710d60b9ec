#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "rlab/agent.hpp"
#include "rlab/harness.hpp"
#include "rlab/preprocess.hpp"
#include "rlab/replay.hpp"
#include "rlab/runner_env.hpp"
#include "rlab/stats.hpp"

namespace py = pybind11;
using namespace rlab;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> frame_to_numpy(const Frame& f) {
  py::array_t<double> out({static_cast<py::ssize_t>(f.height), static_cast<py::ssize_t>(f.width)});
  std::copy(f.pixels.begin(), f.pixels.end(), out.mutable_data());
  return out;
}

Frame frame_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Frame f(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), f.pixels.begin());
  return f;
}

RunConfig config_from_dict(const py::dict& settings) {
  RunConfig config = RunConfig::from_preset("desk");
  nlohmann::json object = nlohmann::json::object();
  for (const auto& [key, value] : settings) {
    const std::string k = py::str(key);
    if (py::isinstance<py::bool_>(value)) {
      object[k] = value.cast<bool>();
    } else if (py::isinstance<py::int_>(value)) {
      object[k] = value.cast<long long>();
    } else if (py::isinstance<py::float_>(value)) {
      object[k] = value.cast<double>();
    } else {
      object[k] = std::string(py::str(value));
    }
  }
  apply_json(config, object);
  return config;
}

}  // namespace

PYBIND11_MODULE(_rlab, m) {
  m.doc() = "Bindings for the rlab C++ core";

  py::class_<StepResult>(m, "StepResult")
      .def_property_readonly("observation", [](const StepResult& r) { return to_numpy(r.observation); })
      .def_readonly("reward", &StepResult::reward)
      .def_readonly("terminal", &StepResult::terminal)
      .def_readonly("truncated", &StepResult::truncated)
      .def_readonly("score", &StepResult::score);

  py::class_<RunnerEnv>(m, "RunnerEnv")
      .def(py::init([](std::int64_t max_ticks) {
             RunnerConfig c;
             c.max_ticks = max_ticks;
             return RunnerEnv(c);
           }),
           py::arg("max_ticks") = 0)
      .def("reset", [](RunnerEnv& env, std::uint64_t seed) { return to_numpy(env.reset(seed)); }, py::arg("seed"))
      .def("step", [](RunnerEnv& env, std::size_t action) { return env.step(action); }, py::arg("action"))
      .def("render", [](const RunnerEnv& env) { return frame_to_numpy(env.render()); })
      .def("oracle_should_jump", &RunnerEnv::oracle_should_jump)
      .def_property_readonly("done", &RunnerEnv::done)
      .def_property_readonly("tick", [](const RunnerEnv& env) { return env.state().tick; })
      .def_property_readonly("score", [](const RunnerEnv& env) { return env.state().score; })
      .def_property_readonly("speed", [](const RunnerEnv& env) { return env.state().speed; })
      .def("__copy__", [](const RunnerEnv& env) { return RunnerEnv(env); });

  m.def("preprocess", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& frame) {
    return frame_to_numpy(preprocess(frame_from_numpy(frame)));
  }, py::arg("frame"), "Binarize, invert, open and resize a raw frame to 84x84.");

  py::class_<SumTree>(m, "SumTree")
      .def(py::init<std::size_t>(), py::arg("capacity"))
      .def("update", &SumTree::update, py::arg("index"), py::arg("priority"))
      .def("find_prefix", &SumTree::find_prefix, py::arg("x"))
      .def("leaf", &SumTree::leaf, py::arg("index"))
      .def_property_readonly("total", &SumTree::total)
      .def_property_readonly("capacity", &SumTree::capacity);

  m.def("is_weights",
        [](const std::vector<double>& p, std::size_t n, double beta) { return is_weights(p, n, beta); },
        py::arg("probabilities"), py::arg("n"), py::arg("beta"));
  m.def("dqn_target",
        [](double r, const std::vector<double>& q, bool terminal, double gamma) {
          return dqn_target(r, q, terminal, gamma);
        },
        py::arg("reward"), py::arg("next_q_target"), py::arg("terminal"), py::arg("gamma"));
  m.def("double_dqn_target",
        [](double r, const std::vector<double>& qp, const std::vector<double>& qt, bool terminal, double gamma) {
          return double_dqn_target(r, qp, qt, terminal, gamma);
        },
        py::arg("reward"), py::arg("next_q_policy"), py::arg("next_q_target"), py::arg("terminal"),
        py::arg("gamma"));

  py::class_<SummaryStats>(m, "Summary")
      .def_readonly("count", &SummaryStats::count)
      .def_readonly("mean", &SummaryStats::mean)
      .def_readonly("std", &SummaryStats::std)
      .def_readonly("min", &SummaryStats::min)
      .def_readonly("max", &SummaryStats::max)
      .def_readonly("p25", &SummaryStats::p25)
      .def_readonly("p50", &SummaryStats::p50)
      .def_readonly("p75", &SummaryStats::p75);
  m.def("summarize", [](const std::vector<double>& scores) { return summarize(scores); }, py::arg("scores"));

  m.def("cliff",
        [](const std::string& algo, double alpha, double gamma, double epsilon, double epsilon_final,
           std::size_t episodes, std::uint64_t seed) {
          CliffOptions o{algo, alpha, gamma, epsilon, epsilon_final, episodes, seed};
          CliffResult r;
          {
            py::gil_scoped_release release;
            r = cmd_cliff(o);
          }
          py::dict out;
          out["return"] = r.rollout.total_return;
          out["length"] = r.rollout.length();
          out["reached_goal"] = r.rollout.reached_terminal;
          out["grid"] = r.grid;
          return out;
        },
        py::arg("algo") = "qlearning", py::arg("alpha") = 0.5, py::arg("gamma") = 1.0, py::arg("epsilon") = 0.1,
        py::arg("epsilon_final") = -1.0, py::arg("episodes") = 500, py::arg("seed") = 0,
        "Train a tabular learner on cliff walking and return its greedy rollout.");

  m.def("train",
        [](const py::dict& settings) {
          const RunConfig config = config_from_dict(settings);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = cmd_train(config);
          }
          py::dict out;
          out["run_dir"] = r.run_dir;
          out["checkpoint"] = r.checkpoint;
          out["scores"] = r.scores();
          out["env_steps"] = r.env_steps;
          out["train_steps"] = r.train_steps;
          return out;
        },
        py::arg("settings") = py::dict(),
        "Train with a preset plus overrides given as config keys, e.g. {'preset': 'desk', 'episodes': 20}.");

  m.def("evaluate",
        [](const std::filesystem::path& checkpoint, std::size_t episodes, std::uint64_t seed,
           const std::string& output_dir) {
          // A string, not a path: pathlib turns "" into ".".
          EvalOptions o{checkpoint, episodes, seed, output_dir};
          EvalResult r;
          {
            py::gil_scoped_release release;
            r = cmd_eval(o);
          }
          py::dict out;
          out["scores"] = r.scores;
          out["summary"] = r.stats;
          return out;
        },
        py::arg("checkpoint"), py::arg("episodes") = 30, py::arg("seed") = 0,
        py::arg("output_dir") = "");
}
