#include "gssc/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace gssc {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  }
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw GsscError("checkpoint: tensor data does not match its shape header");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[k++].get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json j;
  j["rows"] = v.size();
  j["cols"] = 1;
  std::vector<double> data(v.data(), v.data() + v.size());
  j["data"] = std::move(data);
  return j;
}

Vector vector_from_json(const json& j) {
  Matrix m = matrix_from_json(j);
  if (m.cols() != 1) throw GsscError("checkpoint: expected a column vector");
  return m.col(0);
}

const char* objective_name(TrainConfig::Objective o) {
  return o == TrainConfig::Objective::Homophily ? "homophily" : "explicit-weight";
}

const char* optimizer_name(TrainConfig::OptimizerKind o) {
  return o == TrainConfig::OptimizerKind::Adam ? "adam" : "sgd";
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["lr_theta"] = c.lr_theta;
  j["lr_psi"] = c.lr_psi;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["batch"] = c.batch;
  j["fusion_alpha"] = c.fusion_alpha;
  j["temperature"] = c.temperature;
  j["negatives"] = c.negatives;
  j["margin"] = c.margin;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  j["objective"] = objective_name(c.objective);
  j["optimizer"] = optimizer_name(c.optimizer);
  j["inner_steps"] = c.inner_steps;
  j["no_negatives"] = c.no_negatives;
  j["fixed_beta_one"] = c.fixed_beta_one;
  j["exclude_neighbor_negatives"] = c.exclude_neighbor_negatives;
  j["pseudo_use_true_labels"] = c.pseudo_use_true_labels;
  j["freeze_sparsifier"] = c.freeze_sparsifier;
  j["threads"] = c.threads;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "lr_theta") {
      c.lr_theta = value.get<double>();
    } else if (key == "lr_psi") {
      c.lr_psi = value.get<double>();
    } else if (key == "weight_decay") {
      c.weight_decay = value.get<double>();
    } else if (key == "epochs") {
      c.epochs = value.get<int>();
    } else if (key == "warmup_epochs") {
      c.warmup_epochs = value.get<int>();
    } else if (key == "layers") {
      c.layers = value.get<int>();
    } else if (key == "hidden") {
      c.hidden = value.get<int>();
    } else if (key == "batch") {
      c.batch = value.get<int>();
    } else if (key == "fusion_alpha") {
      c.fusion_alpha = value.get<double>();
    } else if (key == "temperature") {
      c.temperature = value.get<double>();
    } else if (key == "negatives") {
      c.negatives = value.get<int>();
    } else if (key == "margin") {
      if (value.is_string() && value.get<std::string>() == "inf") {
        c.margin = std::numeric_limits<double>::infinity();
      } else {
        c.margin = value.get<double>();
      }
    } else if (key == "dropout") {
      c.dropout = value.get<double>();
    } else if (key == "seed") {
      c.seed = value.get<std::uint64_t>();
    } else if (key == "objective") {
      const auto s = value.get<std::string>();
      if (s == "homophily") {
        c.objective = TrainConfig::Objective::Homophily;
      } else if (s == "explicit-weight") {
        c.objective = TrainConfig::Objective::ExplicitWeight;
      } else {
        throw GsscError("config: objective must be 'homophily' or 'explicit-weight', got '" + s + "'");
      }
    } else if (key == "optimizer") {
      const auto s = value.get<std::string>();
      if (s == "adam") {
        c.optimizer = TrainConfig::OptimizerKind::Adam;
      } else if (s == "sgd") {
        c.optimizer = TrainConfig::OptimizerKind::Sgd;
      } else {
        throw GsscError("config: optimizer must be 'adam' or 'sgd', got '" + s + "'");
      }
    } else if (key == "inner_steps") {
      c.inner_steps = value.get<int>();
    } else if (key == "no_negatives") {
      c.no_negatives = value.get<bool>();
    } else if (key == "fixed_beta_one") {
      c.fixed_beta_one = value.get<bool>();
    } else if (key == "exclude_neighbor_negatives") {
      c.exclude_neighbor_negatives = value.get<bool>();
    } else if (key == "pseudo_use_true_labels") {
      c.pseudo_use_true_labels = value.get<bool>();
    } else if (key == "freeze_sparsifier") {
      c.freeze_sparsifier = value.get<bool>();
    } else if (key == "threads") {
      c.threads = value.get<int>();
    } else {
      throw GsscError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const BackboneState& theta,
                     const SparsifierState& psi, const TrainConfig& config) {
  json j;
  j["format"] = kCheckpointFormat;
  j["config"] = config_to_json(config);

  json th;
  th["dropout_rate"] = theta.dropout_rate;
  th["layer_weights"] = json::array();
  for (const auto& w : theta.layer_weights) th["layer_weights"].push_back(matrix_to_json(w));
  th["bn"] = json::array();
  for (const auto& bn : theta.bn) {
    json b;
    b["gamma"] = vector_to_json(bn.gamma);
    b["beta"] = vector_to_json(bn.beta);
    b["running_mean"] = vector_to_json(bn.running_mean);
    b["running_var"] = vector_to_json(bn.running_var);
    th["bn"].push_back(std::move(b));
  }
  th["head_f"] = matrix_to_json(theta.head_f);
  th["head_g"] = matrix_to_json(theta.head_g);
  th["interp_a"] = vector_to_json(theta.interp_a);
  j["theta"] = std::move(th);

  json ps;
  ps["embed_weight"] = matrix_to_json(psi.embed_weight);
  ps["fusion_alpha"] = psi.fusion_alpha;
  ps["temperature"] = psi.temperature;
  j["psi"] = std::move(ps);

  std::ofstream out(path);
  if (!out) throw GsscError("save_checkpoint: cannot write " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GsscError("load_checkpoint: cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw GsscError("load_checkpoint: parse error: " + std::string(e.what()));
  }
  if (!j.contains("format") || j["format"].get<std::string>() != kCheckpointFormat) {
    throw GsscError("load_checkpoint: unsupported or missing format tag");
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(j.at("config"));

  const json& th = j.at("theta");
  ckpt.theta.dropout_rate = th.at("dropout_rate").get<double>();
  for (const auto& w : th.at("layer_weights")) {
    ckpt.theta.layer_weights.push_back(matrix_from_json(w));
  }
  for (const auto& b : th.at("bn")) {
    BnLayer bn;
    bn.gamma = vector_from_json(b.at("gamma"));
    bn.beta = vector_from_json(b.at("beta"));
    bn.running_mean = vector_from_json(b.at("running_mean"));
    bn.running_var = vector_from_json(b.at("running_var"));
    ckpt.theta.bn.push_back(std::move(bn));
  }
  ckpt.theta.head_f = matrix_from_json(th.at("head_f"));
  ckpt.theta.head_g = matrix_from_json(th.at("head_g"));
  ckpt.theta.interp_a = vector_from_json(th.at("interp_a"));
  ckpt.theta.mode = Mode::Eval;

  const json& ps = j.at("psi");
  ckpt.psi.embed_weight = matrix_from_json(ps.at("embed_weight"));
  ckpt.psi.fusion_alpha = ps.at("fusion_alpha").get<double>();
  ckpt.psi.temperature = ps.at("temperature").get<double>();
  return ckpt;
}

std::string config_to_json_text(const TrainConfig& cfg, int indent) {
  json j = config_to_json(cfg);
  if (std::isinf(cfg.margin)) j["margin"] = "inf";
  return j.dump(indent);
}

TrainConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw GsscError("config: parse error: " + std::string(e.what()));
  }
  if (!j.is_object()) throw GsscError("config: top level must be a JSON object");
  return config_from_json(j);
}

}  // namespace gssc
