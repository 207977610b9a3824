#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "neugap/data.hpp"
#include "neugap/errors.hpp"
#include "neugap/fit_config.hpp"

namespace neugap {

using json = nlohmann::json;

struct DataConfig {
  std::optional<std::string> path;
  std::optional<SynthConfig> synthetic;
  std::string target;
  std::optional<std::pair<std::string, std::string>> location_columns;
  double test_location_fraction = 0.2;
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct BenchmarkConfig {
  std::vector<std::string> targets;  // empty: data.target, or every column
  std::vector<MethodKind> methods = {MethodKind::proposed, MethodKind::gp, MethodKind::nn};
  std::string report_prefix = "benchmark";
};

struct RunConfig {
  FitConfig fit;
  DataConfig data;
  BenchmarkConfig benchmark;
};

namespace detail {

inline void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto &[key, value] : j.items()) {
    bool ok = false;
    for (const char *a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const json &j, const char *key, T &out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline SynthConfig parse_synth(const json &j) {
  check_keys(j,
             {"grid_lat", "grid_lon", "months", "trend_hidden", "trend_weight_scale", "trend_amplitude",
              "residual_alpha", "residual_gamma", "noise_variance", "target_name"},
             "data.synthetic");
  SynthConfig s;
  read(j, "grid_lat", s.grid_lat);
  read(j, "grid_lon", s.grid_lon);
  read(j, "months", s.months);
  read(j, "trend_hidden", s.trend_hidden);
  read(j, "trend_weight_scale", s.trend_weight_scale);
  read(j, "trend_amplitude", s.trend_amplitude);
  read(j, "residual_alpha", s.residual_alpha);
  read(j, "residual_gamma", s.residual_gamma);
  read(j, "noise_variance", s.noise_variance);
  read(j, "target_name", s.target_name);
  return s;
}

inline json synth_to_json(const SynthConfig &s) {
  return {{"grid_lat", s.grid_lat},
          {"grid_lon", s.grid_lon},
          {"months", s.months},
          {"trend_hidden", s.trend_hidden},
          {"trend_weight_scale", s.trend_weight_scale},
          {"trend_amplitude", s.trend_amplitude},
          {"residual_alpha", s.residual_alpha},
          {"residual_gamma", s.residual_gamma},
          {"noise_variance", s.noise_variance},
          {"target_name", s.target_name}};
}

inline RunConfig parse_config_unchecked(const json &j) {
  check_keys(j, {"model", "training", "data", "benchmark"}, "");
  RunConfig c;
  if (j.contains("model")) {
    const auto &m = j.at("model");
    check_keys(m, {"kind", "mlp", "kernel", "inducing"}, "model");
    if (m.contains("kind")) c.fit.kind = parse_method(m.at("kind").get<std::string>());
    if (m.contains("mlp")) {
      check_keys(m.at("mlp"), {"hidden"}, "model.mlp");
      read(m.at("mlp"), "hidden", c.fit.hidden);
    }
    if (m.contains("kernel")) {
      const auto &k = m.at("kernel");
      check_keys(k, {"alpha0", "gamma0"}, "model.kernel");
      read(k, "alpha0", c.fit.alpha0);
      if (k.contains("gamma0") && !k.at("gamma0").is_null()) c.fit.gamma0 = k.at("gamma0").get<double>();
    }
    if (m.contains("inducing")) {
      const auto &z = m.at("inducing");
      check_keys(z, {"M", "optimize_Z"}, "model.inducing");
      read(z, "M", c.fit.num_inducing);
      read(z, "optimize_Z", c.fit.optimize_inducing);
    }
  }
  if (j.contains("training")) {
    const auto &t = j.at("training");
    check_keys(t, {"minibatch", "max_epochs", "patience", "pretrain_epochs", "adam"}, "training");
    read(t, "minibatch", c.fit.minibatch);
    read(t, "max_epochs", c.fit.max_epochs);
    read(t, "patience", c.fit.patience);
    read(t, "pretrain_epochs", c.fit.pretrain_epochs);
    if (t.contains("adam")) {
      const auto &a = t.at("adam");
      check_keys(a, {"lr", "beta1", "beta2", "eps"}, "training.adam");
      read(a, "lr", c.fit.adam.lr);
      read(a, "beta1", c.fit.adam.beta1);
      read(a, "beta2", c.fit.adam.beta2);
      read(a, "eps", c.fit.adam.eps);
    }
  }
  if (j.contains("data")) {
    const auto &d = j.at("data");
    check_keys(d,
               {"path", "synthetic", "target", "location_columns", "test_location_fraction", "valid_fraction", "seed"},
               "data");
    if (d.contains("path") && !d.at("path").is_null()) c.data.path = d.at("path").get<std::string>();
    if (d.contains("synthetic") && !d.at("synthetic").is_null()) c.data.synthetic = parse_synth(d.at("synthetic"));
    read(d, "target", c.data.target);
    if (d.contains("location_columns") && !d.at("location_columns").is_null()) {
      const auto cols = d.at("location_columns").get<std::vector<std::string>>();
      if (cols.size() != 2) throw ConfigError("data.location_columns must name latitude and longitude");
      c.data.location_columns = std::make_pair(cols[0], cols[1]);
    }
    read(d, "test_location_fraction", c.data.test_location_fraction);
    read(d, "valid_fraction", c.data.valid_fraction);
    read(d, "seed", c.data.seed);
  }
  if (j.contains("benchmark")) {
    const auto &b = j.at("benchmark");
    check_keys(b, {"targets", "methods", "report_prefix"}, "benchmark");
    read(b, "targets", c.benchmark.targets);
    if (b.contains("methods")) {
      c.benchmark.methods.clear();
      for (const auto &name : b.at("methods").get<std::vector<std::string>>())
        c.benchmark.methods.push_back(parse_method(name));
      if (c.benchmark.methods.empty()) throw ConfigError("benchmark.methods is empty");
    }
    read(b, "report_prefix", c.benchmark.report_prefix);
  }
  return c;
}

}  // namespace detail

/// Parses a run configuration. Absent fields take defaults; unknown keys
/// and ill-typed values raise ConfigError.
inline RunConfig parse_config(const json &j) {
  RunConfig c;
  try {
    c = detail::parse_config_unchecked(j);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.fit.validate();
  if (c.data.path && c.data.synthetic) throw ConfigError("data.path and data.synthetic are mutually exclusive");
  if (!(c.data.valid_fraction >= 0.0 && c.data.valid_fraction < 1.0))
    throw ConfigError("data.valid_fraction must lie in [0, 1)");
  if (!(c.data.test_location_fraction > 0.0 && c.data.test_location_fraction < 1.0))
    throw ConfigError("data.test_location_fraction must lie in (0, 1)");
  return c;
}

/// Reads a config file; a relative data.path is resolved against the
/// config file's directory.
inline RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  RunConfig c = parse_config(j);
  if (c.data.path && std::filesystem::path(*c.data.path).is_relative())
    c.data.path = (std::filesystem::path(path).parent_path() / *c.data.path).lexically_normal().string();
  return c;
}

inline json to_json(const RunConfig &c) {
  json model = {{"kind", to_string(c.fit.kind)},
                {"mlp", {{"hidden", c.fit.hidden}}},
                {"kernel", {{"alpha0", c.fit.alpha0}, {"gamma0", nullptr}}},
                {"inducing", {{"M", c.fit.num_inducing}, {"optimize_Z", c.fit.optimize_inducing}}}};
  if (c.fit.gamma0) model["kernel"]["gamma0"] = *c.fit.gamma0;
  json training = {{"minibatch", c.fit.minibatch},
                   {"max_epochs", c.fit.max_epochs},
                   {"patience", c.fit.patience},
                   {"pretrain_epochs", c.fit.pretrain_epochs},
                   {"adam",
                    {{"lr", c.fit.adam.lr},
                     {"beta1", c.fit.adam.beta1},
                     {"beta2", c.fit.adam.beta2},
                     {"eps", c.fit.adam.eps}}}};
  json data = {{"target", c.data.target},
               {"test_location_fraction", c.data.test_location_fraction},
               {"valid_fraction", c.data.valid_fraction},
               {"seed", c.data.seed}};
  if (c.data.path) data["path"] = *c.data.path;
  if (c.data.synthetic) data["synthetic"] = detail::synth_to_json(*c.data.synthetic);
  if (c.data.location_columns)
    data["location_columns"] = {c.data.location_columns->first, c.data.location_columns->second};
  json methods = json::array();
  for (auto m : c.benchmark.methods) methods.push_back(to_string(m));
  json bench = {{"targets", c.benchmark.targets}, {"methods", methods}, {"report_prefix", c.benchmark.report_prefix}};
  return {{"model", model}, {"training", training}, {"data", data}, {"benchmark", bench}};
}

}  // namespace neugap
