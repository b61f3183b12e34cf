#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "kinship/errors.hpp"
#include "kinship/models.hpp"

namespace kinship {

// Checkpoints are JSON documents. Parameters are stored as float values
// widened to double; nlohmann prints doubles with round-trip precision, so a
// reload restores every float bit for bit.

namespace detail {

inline nlohmann::json mlp_to_json(const nn::Mlp<Real>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w, b;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    for (Eigen::Index c = 0; c < l.bias.cols(); ++c) b.push_back(l.bias(0, c));
    layers.push_back({{"in", l.in()}, {"out", l.out()}, {"weight", w}, {"bias", b}});
  }
  return {{"input_dim", net.input_dim()}, {"layers", layers}};
}

inline nn::Mlp<Real> mlp_from_json(const nlohmann::json& j) {
  std::vector<nn::Linear<Real>> layers;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
      throw ParseError("checkpoint: layer parameter count does not match its shape");
    }
    nn::Linear<Real> l{Matrix<Real>(out, in), Matrix<Real>(1, out)};
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = static_cast<Real>(w[k++]);
    for (Eigen::Index c = 0; c < out; ++c) l.bias(0, c) = static_cast<Real>(b[static_cast<std::size_t>(c)]);
    layers.push_back(std::move(l));
  }
  return nn::Mlp<Real>::from_layers(j.at("input_dim").get<std::size_t>(), std::move(layers));
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},
          {"encoder", c.encoder},
          {"encoder_hidden", c.encoder_hidden},
          {"embedding_dim", c.embedding_dim},
          {"projection_hidden", c.projection_hidden},
          {"classifier_hidden", c.classifier_hidden},
          {"zero_init_classifier_output", c.zero_init_classifier_output},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.encoder = j.at("encoder").get<std::string>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.projection_hidden = j.at("projection_hidden").get<std::size_t>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
  c.zero_init_classifier_output = j.at("zero_init_classifier_output").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// `run_config` is the effective key/value configuration of the run that
/// produced the model; it is stored verbatim for replay.
inline nlohmann::json checkpoint_to_json(const KinshipModel& m, const nlohmann::json& run_config = nlohmann::json::object()) {
  return {{"format", "kinship-checkpoint"},
          {"version", 1},
          {"model_config", model_config_to_json(m.config)},
          {"run_config", run_config},
          {"encoder",
           {{"trainable_mode", std::string(to_string(m.encoder.mode()))},
            {"stage1_complete", m.encoder.stage1_complete()},
            {"net", detail::mlp_to_json(m.encoder.net())}}},
          {"projection_head", detail::mlp_to_json(m.head.net())},
          {"classifier", detail::mlp_to_json(m.classifier.net())}};
}

inline KinshipModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "kinship-checkpoint" || j.at("version") != 1) {
      throw ParseError("checkpoint: unrecognised format or version");
    }
    KinshipModel m;
    m.config = model_config_from_json(j.at("model_config"));
    const auto& enc = j.at("encoder");
    m.encoder = Encoder(detail::mlp_from_json(enc.at("net")),
                        parse_trainable_mode(enc.at("trainable_mode").get<std::string>()));
    m.encoder.mark_stage1_complete(enc.at("stage1_complete").get<bool>());
    m.head = ProjectionHead(detail::mlp_from_json(j.at("projection_head")));
    m.classifier = FusionClassifier(detail::mlp_from_json(j.at("classifier")));
    if (m.head.net().input_dim() != m.encoder.embedding_dim() ||
        m.classifier.embedding_dim() != m.encoder.embedding_dim()) {
      throw ParseError("checkpoint: component dimensions disagree");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const KinshipModel& m, const std::string& path,
                            const nlohmann::json& run_config = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(m, run_config).dump() << '\n';
}

inline KinshipModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace kinship
