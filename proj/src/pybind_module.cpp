// Copyright 2026 The dermarl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings: replay math, environments, the trainer and whole runs.
// Configurations cross the boundary as INI text.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "der/cli.hpp"

namespace py = pybind11;

namespace der {
namespace {

py::dict step_dict(const envs::StepResult& r) {
  py::dict d;
  d["reward"] = r.team_reward;
  d["state"] = r.state;
  d["obs"] = r.obs;
  d["done"] = std::vector<bool>(r.done.begin(), r.done.end());
  d["team_done"] = r.team_done;
  d["truncated"] = r.truncated;
  return d;
}

py::dict update_dict(const train::UpdateMetrics& m) {
  py::dict d;
  d["L_tot"] = m.loss_tot;
  d["L_ind"] = m.loss_ind;
  d["mean_abs_delta"] = m.mean_abs_delta;
  d["eta"] = m.eta;
  d["epsilon"] = m.epsilon;
  d["selected_count"] = m.selected;
  return d;
}

// An environment plus the RNG its resets draw from.
class PyEnv {
 public:
  PyEnv(std::unique_ptr<envs::Env> env, std::uint64_t seed)
      : env_(std::move(env)), rng_(derive_rng(seed, 0)) {}

  py::dict spec() const {
    const envs::EnvSpec s = env_->spec();
    py::dict d;
    d["n_agents"] = s.n_agents;
    d["n_actions"] = s.n_actions;
    d["obs_width"] = s.obs_width;
    d["state_width"] = s.state_width;
    d["episode_limit"] = s.episode_limit;
    d["reward_min"] = s.reward_min;
    d["reward_max"] = s.reward_max;
    return d;
  }
  py::dict reset() {
    const envs::ResetResult r = env_->reset(rng_);
    py::dict d;
    d["state"] = r.state;
    d["obs"] = r.obs;
    return d;
  }
  py::dict step(const std::vector<int>& actions) {
    return step_dict(env_->step(actions));
  }

 private:
  std::unique_ptr<envs::Env> env_;
  Rng rng_;
};

cli::RunConfig config_of(const std::string& text) {
  return cli::parse_config(text);
}

}  // namespace
}  // namespace der

PYBIND11_MODULE(_core, m) {
  using namespace der;
  m.doc() = "Discriminative experience replay for cooperative Q-learning.";

  static py::exception<cli::ConfigError> config_error(m, "ConfigError",
                                                       PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const cli::ConfigError& e) {
      py::set_error(config_error, e.what());
    }
  });

  m.attr("METRICS_HEADER") = std::string(cli::kMetricsHeader);

  // --- replay math ----------------------------------------------------------
  m.def("individual_reward", &replay::individual_reward, py::arg("team_reward"),
        py::arg("gamma"), py::arg("q_tot"), py::arg("target_q_tot"),
        py::arg("grad"), py::arg("q_i"), py::arg("target_q_i"));
  m.def(
      "priority_probs",
      [](const std::vector<double>& td, double alpha, double eps) {
        return replay::priority_probs(td, alpha, eps);
      },
      py::arg("td_errors"), py::arg("alpha"), py::arg("eps") = 1e-6);
  m.def(
      "is_weights",
      [](const std::vector<double>& probs, std::size_t count, double beta) {
        return replay::is_weights(probs, count, beta);
      },
      py::arg("probs"), py::arg("count_candidates"), py::arg("beta"));
  m.def(
      "sample_ratio",
      [](double t, double eta_start, double eta_end, double proportion,
         double t_max) {
        const replay::RatioSchedule s{eta_start, eta_end, proportion, t_max};
        s.validate();
        return replay::sample_ratio(t, s);
      },
      py::arg("t"), py::arg("eta_start") = 0.8, py::arg("eta_end") = 1.0,
      py::arg("proportion") = 0.6, py::arg("t_max"));
  m.def("selection_count", &replay::selection_count, py::arg("candidate_count"),
        py::arg("eta"));
  m.def(
      "select",
      [](const std::vector<double>& probs, double eta, double beta,
         std::uint64_t seed) {
        Rng rng = derive_rng(seed, 2);
        std::vector<std::tuple<std::size_t, double, double>> out;
        for (const auto& s :
             replay::select(probs.size(), eta, probs, beta, rng)) {
          out.emplace_back(s.index, s.probability, s.weight);
        }
        return out;
      },
      py::arg("probs"), py::arg("eta"), py::arg("beta"), py::arg("seed"),
      "Returns (index, probability, weight) triples.");

  // --- environments ---------------------------------------------------------
  py::class_<PyEnv>(m, "Env")
      .def_property_readonly("spec", &PyEnv::spec)
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step, py::arg("actions"));
  m.def(
      "make_env",
      [](const std::string& config_text, std::uint64_t seed) {
        return PyEnv(envs::make_env(config_of(config_text).env), seed);
      },
      py::arg("config") = "", py::arg("seed") = 0,
      "Environment described by the [env] section of an INI config.");

  // --- configuration and training -------------------------------------------
  m.def(
      "normalize_config",
      [](const std::string& text) { return cli::format_config(config_of(text)); },
      py::arg("config"), "Parses, validates and re-emits a config.");

  py::class_<train::Trainer>(m, "Trainer")
      .def(py::init([](const std::string& text, std::uint64_t seed) {
             const cli::RunConfig c = config_of(text);
             return std::make_unique<train::Trainer>(
                 c.train, envs::make_env(c.env), seed);
           }),
           py::arg("config"), py::arg("seed"))
      .def_property_readonly("t_step", &train::Trainer::t_step)
      .def_property_readonly("updates", &train::Trainer::updates)
      .def_property_readonly("buffer_size",
                             [](const train::Trainer& t) { return t.buffer().size(); })
      .def("collect_episode",
           [](train::Trainer& t) { return t.collect_episode().steps.size(); },
           "Collects one episode; returns its length.")
      .def("train_step",
           [](train::Trainer& t) { return update_dict(t.train_step()); })
      .def("evaluate", &train::Trainer::evaluate_at, py::arg("index") = 0);

  m.def(
      "run",
      [](const std::string& text, std::uint64_t seed) {
        const cli::RunConfig c = config_of(text);
        py::gil_scoped_release release;
        return cli::run_to_csv(c, seed);
      },
      py::arg("config"), py::arg("seed"),
      "Full training run; returns the metrics CSV text.");
}
