#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "kinship/augment.hpp"
#include "kinship/dataset.hpp"
#include "kinship/errors.hpp"
#include "kinship/models.hpp"
#include "kinship/synthetic.hpp"
#include "kinship/training.hpp"

namespace kinship {

/// `key = value` lines; `#` starts a comment. Later values win.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "config") {
    KeyValueConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (detail::blank(line)) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError(origin + " line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      auto key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(origin + " line " + std::to_string(line_no) + ": empty key");
      c.values_[key] = detail::trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  /// Parses a `key=value` override.
  void set_assignment(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  void merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::istringstream s(it->second);
    double v = 0;
    if (!(s >> v) || !(s >> std::ws).eof()) throw ConfigError("config '" + key + "': not a number: " + it->second);
    return v;
  }

  std::uint64_t get(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("config '" + key + "': not a non-negative integer: " + s);
    }
    return v;
  }

  bool get(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config '" + key + "': not a boolean: " + it->second);
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Everything a CLI run can be configured with. One root seed; every
/// component derives its own named stream from it.
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticConfig synth;
  double heldout_fraction = 0.25;
  ModelConfig model;
  Stage1Config stage1;
  Stage2Config stage2;
  AugmentPolicy augment = AugmentPolicy::standard();
  std::size_t dry_run_epochs = 20;
  double threshold = 0.5;
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "synth.num_families", "synth.individuals_min", "synth.individuals_max", "synth.images_min",
      "synth.images_max", "synth.archetype_dim", "synth.family_separation", "synth.within_family_sigma",
      "synth.image_noise_sigma", "synth.heldout_fraction",
      "model.encoder", "model.input_dim", "model.encoder_hidden", "model.embedding_dim", "model.projection_hidden",
      "model.classifier_hidden", "model.zero_init_classifier_output",
      "stage1.learning_rate", "stage1.weight_decay", "stage1.momentum", "stage1.temperature", "stage1.batch_size",
      "stage1.steps", "stage1.encoder_mode",
      "stage2.learning_rate", "stage2.encoder_lr_scale", "stage2.batch_size", "stage2.steps", "stage2.encoder_mode", "stage2.negative_ratio",
      "stage2.augment", "stage2.require_stage1",
      "augment.color_jitter", "augment.grayscale_p", "augment.flip_p", "augment.noise_sigma",
      "sampler.epochs", "eval.threshold"};
  return keys;
}

inline RunConfig run_config_from(const KeyValueConfig& kv) {
  for (const auto& [k, v] : kv.values()) {
    if (!known_config_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig c;
  auto size = [&](const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(kv.get(key, static_cast<std::uint64_t>(fallback)));
  };
  c.seed = kv.get("seed", c.seed);

  auto& s = c.synth;
  s.num_families = size("synth.num_families", s.num_families);
  s.individuals_min = size("synth.individuals_min", s.individuals_min);
  s.individuals_max = size("synth.individuals_max", s.individuals_max);
  s.images_min = size("synth.images_min", s.images_min);
  s.images_max = size("synth.images_max", s.images_max);
  s.archetype_dim = size("synth.archetype_dim", s.archetype_dim);
  s.family_separation = kv.get("synth.family_separation", s.family_separation);
  s.within_family_sigma = kv.get("synth.within_family_sigma", s.within_family_sigma);
  s.image_noise_sigma = kv.get("synth.image_noise_sigma", s.image_noise_sigma);
  s.seed = c.seed;
  c.heldout_fraction = kv.get("synth.heldout_fraction", c.heldout_fraction);

  auto& m = c.model;
  m.encoder = kv.get("model.encoder", m.encoder);
  m.input_dim = size("model.input_dim", s.archetype_dim);
  m.encoder_hidden = size("model.encoder_hidden", m.encoder_hidden);
  m.embedding_dim = size("model.embedding_dim", m.embedding_dim);
  m.projection_hidden = size("model.projection_hidden", m.projection_hidden);
  m.classifier_hidden = size("model.classifier_hidden", m.classifier_hidden);
  m.zero_init_classifier_output = kv.get("model.zero_init_classifier_output", m.zero_init_classifier_output);
  m.seed = c.seed;

  c.augment = AugmentPolicy(kv.get("augment.color_jitter", c.augment.color_jitter_strength()),
                            kv.get("augment.grayscale_p", c.augment.grayscale_probability()),
                            kv.get("augment.flip_p", c.augment.horizontal_flip_probability()),
                            kv.get("augment.noise_sigma", c.augment.embedding_noise_sigma()));

  auto& a = c.stage1;
  a.learning_rate = kv.get("stage1.learning_rate", a.learning_rate);
  a.weight_decay = kv.get("stage1.weight_decay", a.weight_decay);
  a.momentum = kv.get("stage1.momentum", a.momentum);
  a.temperature = kv.get("stage1.temperature", a.temperature);
  a.batch_size = size("stage1.batch_size", a.batch_size);
  a.steps = size("stage1.steps", a.steps);
  a.encoder_mode = parse_trainable_mode(kv.get("stage1.encoder_mode", std::string(to_string(a.encoder_mode))));
  a.augment = c.augment;
  a.seed = c.seed;

  auto& b = c.stage2;
  b.learning_rate = kv.get("stage2.learning_rate", b.learning_rate);
  b.encoder_lr_scale = kv.get("stage2.encoder_lr_scale", b.encoder_lr_scale);
  b.batch_size = size("stage2.batch_size", b.batch_size);
  b.steps = size("stage2.steps", b.steps);
  b.encoder_mode = parse_trainable_mode(kv.get("stage2.encoder_mode", std::string(to_string(b.encoder_mode))));
  b.negative_ratio = kv.get("stage2.negative_ratio", b.negative_ratio);
  b.augment = kv.get("stage2.augment", b.augment);
  b.require_stage1 = kv.get("stage2.require_stage1", b.require_stage1);
  b.augment_policy = c.augment;
  b.seed = c.seed;

  c.dry_run_epochs = size("sampler.epochs", c.dry_run_epochs);
  c.threshold = kv.get("eval.threshold", c.threshold);
  return c;
}

/// Full listing of every key, suitable for exact replay.
inline KeyValueConfig to_key_values(const RunConfig& c) {
  KeyValueConfig kv;
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  auto flag = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("seed", std::to_string(c.seed));
  kv.set("synth.num_families", std::to_string(c.synth.num_families));
  kv.set("synth.individuals_min", std::to_string(c.synth.individuals_min));
  kv.set("synth.individuals_max", std::to_string(c.synth.individuals_max));
  kv.set("synth.images_min", std::to_string(c.synth.images_min));
  kv.set("synth.images_max", std::to_string(c.synth.images_max));
  kv.set("synth.archetype_dim", std::to_string(c.synth.archetype_dim));
  kv.set("synth.family_separation", num(c.synth.family_separation));
  kv.set("synth.within_family_sigma", num(c.synth.within_family_sigma));
  kv.set("synth.image_noise_sigma", num(c.synth.image_noise_sigma));
  kv.set("synth.heldout_fraction", num(c.heldout_fraction));
  kv.set("model.encoder", c.model.encoder);
  kv.set("model.input_dim", std::to_string(c.model.input_dim));
  kv.set("model.encoder_hidden", std::to_string(c.model.encoder_hidden));
  kv.set("model.embedding_dim", std::to_string(c.model.embedding_dim));
  kv.set("model.projection_hidden", std::to_string(c.model.projection_hidden));
  kv.set("model.classifier_hidden", std::to_string(c.model.classifier_hidden));
  kv.set("model.zero_init_classifier_output", flag(c.model.zero_init_classifier_output));
  kv.set("stage1.learning_rate", num(c.stage1.learning_rate));
  kv.set("stage1.weight_decay", num(c.stage1.weight_decay));
  kv.set("stage1.momentum", num(c.stage1.momentum));
  kv.set("stage1.temperature", num(c.stage1.temperature));
  kv.set("stage1.batch_size", std::to_string(c.stage1.batch_size));
  kv.set("stage1.steps", std::to_string(c.stage1.steps));
  kv.set("stage1.encoder_mode", std::string(to_string(c.stage1.encoder_mode)));
  kv.set("stage2.learning_rate", num(c.stage2.learning_rate));
  kv.set("stage2.encoder_lr_scale", num(c.stage2.encoder_lr_scale));
  kv.set("stage2.batch_size", std::to_string(c.stage2.batch_size));
  kv.set("stage2.steps", std::to_string(c.stage2.steps));
  kv.set("stage2.encoder_mode", std::string(to_string(c.stage2.encoder_mode)));
  kv.set("stage2.negative_ratio", num(c.stage2.negative_ratio));
  kv.set("stage2.augment", flag(c.stage2.augment));
  kv.set("stage2.require_stage1", flag(c.stage2.require_stage1));
  kv.set("augment.color_jitter", num(c.augment.color_jitter_strength()));
  kv.set("augment.grayscale_p", num(c.augment.grayscale_probability()));
  kv.set("augment.flip_p", num(c.augment.horizontal_flip_probability()));
  kv.set("augment.noise_sigma", num(c.augment.embedding_noise_sigma()));
  kv.set("sampler.epochs", std::to_string(c.dry_run_epochs));
  kv.set("eval.threshold", num(c.threshold));
  return kv;
}

}  // namespace kinship
