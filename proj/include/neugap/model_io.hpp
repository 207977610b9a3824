#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "neugap/errors.hpp"
#include "neugap/pipeline.hpp"

namespace neugap {

constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json vector_to_json(const VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from_json(const json &j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline json matrix_to_json(const MatrixXd &a) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) flat.push_back(a(i, j));
  return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", flat}};
}

inline MatrixXd matrix_from_json(const json &j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw SchemaMismatch("matrix data has the wrong length");
  MatrixXd a(rows, cols);
  for (Eigen::Index i = 0, k = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) a(i, c) = flat[static_cast<std::size_t>(k++)];
  return a;
}

inline json mlp_to_json(const MlpParams &p) {
  json layers = json::array();
  for (const auto &l : p.layers) layers.push_back({{"weights", matrix_to_json(l.weights)}, {"biases", vector_to_json(l.biases)}});
  return {{"layer_sizes", p.layer_sizes}, {"layers", layers}};
}

inline MlpParams mlp_from_json(const json &j) {
  MlpParams p = MlpParams::zeros(j.at("layer_sizes").get<std::vector<int>>());
  const auto &layers = j.at("layers");
  if (layers.size() != p.layers.size()) throw SchemaMismatch("mlp layer count mismatch");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    MatrixXd w = matrix_from_json(layers[l].at("weights"));
    VectorXd b = vector_from_json(layers[l].at("biases"));
    if (w.rows() != p.layers[l].weights.rows() || w.cols() != p.layers[l].weights.cols() ||
        b.size() != p.layers[l].biases.size())
      throw SchemaMismatch("mlp layer shape mismatch");
    p.layers[l] = {std::move(w), std::move(b)};
  }
  return p;
}

inline json scaler_to_json(const Standardizer &s) {
  return {{"mean", vector_to_json(s.mean())}, {"sd", vector_to_json(s.sd())}};
}

inline Standardizer scaler_from_json(const json &j) {
  return {vector_from_json(j.at("mean")), vector_from_json(j.at("sd"))};
}

}  // namespace detail

inline nlohmann::json model_to_json(const TrainedModel &tm) {
  using detail::json;
  json j = {{"format_version", kModelFormatVersion},
            {"kind", to_string(tm.kind)},
            {"feature_names", tm.feature_names},
            {"target_name", tm.target_name},
            {"x_scaler", detail::scaler_to_json(tm.x_scaler)},
            {"y_scaler", detail::scaler_to_json(tm.y_scaler)},
            {"config", tm.config}};
  if (const auto *nn = std::get_if<NnRegressor>(&tm.model)) {
    j["mlp"] = detail::mlp_to_json(nn->mlp);
    j["log_beta"] = nn->log_beta;
    return j;
  }
  const auto &m = std::get<SVGPModel>(tm.model);
  j["mlp"] = m.mean.is_zero() ? json(nullptr) : detail::mlp_to_json(m.mean.mlp());
  j["log_alpha"] = m.kernel.log_alpha;
  j["log_gamma"] = m.kernel.log_gamma;
  j["log_beta"] = m.log_beta;
  j["Z"] = detail::matrix_to_json(m.inducing.z);
  j["m"] = detail::vector_to_json(m.variational.m);
  j["S"] = detail::matrix_to_json(m.variational.s);
  j["lambda1"] = detail::vector_to_json(m.variational.lambda1);
  j["lambda2"] = detail::matrix_to_json(m.variational.lambda2);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json &j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw SchemaMismatch("unsupported model format version");
    TrainedModel tm;
    tm.kind = parse_method(j.at("kind").get<std::string>());
    tm.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    tm.target_name = j.at("target_name").get<std::string>();
    tm.x_scaler = detail::scaler_from_json(j.at("x_scaler"));
    tm.y_scaler = detail::scaler_from_json(j.at("y_scaler"));
    tm.config = j.value("config", nlohmann::json{});
    if (tm.x_scaler.size() != static_cast<Eigen::Index>(tm.feature_names.size()) || tm.y_scaler.size() != 1)
      throw SchemaMismatch("standardizer statistics do not match the feature list");
    if (tm.kind == MethodKind::nn) {
      tm.model = NnRegressor{detail::mlp_from_json(j.at("mlp")), j.at("log_beta").get<double>()};
      return tm;
    }
    SVGPModel m;
    m.mean = j.at("mlp").is_null() ? MeanFunction(ZeroMean{}) : MeanFunction(detail::mlp_from_json(j.at("mlp")));
    m.kernel = {j.at("log_alpha").get<double>(), j.at("log_gamma").get<double>()};
    m.log_beta = j.at("log_beta").get<double>();
    m.inducing.z = detail::matrix_from_json(j.at("Z"));
    m.variational.m = detail::vector_from_json(j.at("m"));
    m.variational.s = detail::matrix_from_json(j.at("S"));
    m.variational.lambda1 = detail::vector_from_json(j.at("lambda1"));
    m.variational.lambda2 = detail::matrix_from_json(j.at("lambda2"));
    const auto mz = m.inducing.z.rows();
    if (m.inducing.z.cols() != static_cast<Eigen::Index>(tm.feature_names.size()) || m.variational.m.size() != mz ||
        m.variational.s.rows() != mz || m.variational.s.cols() != mz || m.variational.lambda1.size() != mz ||
        m.variational.lambda2.rows() != mz)
      throw SchemaMismatch("sparse GP arrays have inconsistent shapes");
    tm.model = std::move(m);
    return tm;
  } catch (const nlohmann::json::exception &e) {
    throw SchemaMismatch(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string &path, const TrainedModel &tm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << model_to_json(tm).dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline TrainedModel load_model(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw SchemaMismatch(std::string("model file is not valid: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace neugap
