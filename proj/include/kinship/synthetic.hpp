#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "kinship/dataset.hpp"
#include "kinship/errors.hpp"
#include "kinship/features.hpp"
#include "kinship/random.hpp"
#include "kinship/relationship.hpp"

namespace kinship {

/// Desk-scale stand-in for FIW: Gaussian family archetypes, individuals
/// scattered around them, images scattered around individuals.
struct SyntheticConfig {
  std::size_t num_families = 60;
  std::size_t individuals_min = 2;
  std::size_t individuals_max = 4;
  std::size_t images_min = 2;
  std::size_t images_max = 4;
  std::size_t archetype_dim = 16;
  double family_separation = 1.0;    // stddev of archetype components
  double within_family_sigma = 0.15;  // individual offset from archetype
  double image_noise_sigma = 0.03;    // image offset from individual
  std::uint64_t seed = 0;

  void validate() const {
    if (num_families < 2) throw ConfigError("synthetic: num_families must be at least 2");
    if (individuals_min < 2) throw ConfigError("synthetic: individuals_per_family must be at least 2");
    if (individuals_max < individuals_min) throw ConfigError("synthetic: empty individuals_per_family range");
    if (images_min < 1) throw ConfigError("synthetic: images_per_individual must be at least 1");
    if (images_max < images_min) throw ConfigError("synthetic: empty images_per_individual range");
    if (images_max > 100) throw ConfigError("synthetic: at most 100 images per individual");
    if (archetype_dim == 0) throw ConfigError("synthetic: archetype_dim must be positive");
    if (!(family_separation > 0)) throw ConfigError("synthetic: family_separation must be positive");
    if (!(within_family_sigma > 0)) throw ConfigError("synthetic: within_family_sigma must be positive");
    if (!(image_noise_sigma >= 0)) throw ConfigError("synthetic: image_noise_sigma must be non-negative");
    if (!(family_separation > within_family_sigma)) {
      throw ConfigError("synthetic: family_separation must exceed within_family_sigma");
    }
  }
};

struct SyntheticData {
  Dataset dataset;
  FeatureStore features;                           // per-image oracle features
  std::vector<std::vector<double>> archetypes;      // per family, in family order
  std::vector<std::vector<double>> individual_bases;  // per Dataset individual index
  std::vector<std::string> family_ids;              // family order
};

namespace detail {
inline std::string padded(const char* prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, n);
  return buf;
}
}  // namespace detail

/// Every unordered pair of individuals within a family becomes a KinPair;
/// relationship tags cycle through the eleven types and carry no semantics.
inline SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng{derive_seed(config.seed, "synth")};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> n_people(config.individuals_min, config.individuals_max);
  std::uniform_int_distribution<std::size_t> n_images(config.images_min, config.images_max);

  SyntheticData out;
  out.features = FeatureStore(config.archetype_dim);
  std::size_t tag = 0;
  const auto dim = config.archetype_dim;

  for (std::size_t f = 0; f < config.num_families; ++f) {
    const auto family_id = detail::padded("F", f + 1, 4);
    out.family_ids.push_back(family_id);
    std::vector<double> archetype(dim);
    for (auto& a : archetype) a = config.family_separation * normal(rng);

    std::vector<std::size_t> members;
    const auto people = n_people(rng);
    for (std::size_t p = 0; p < people; ++p) {
      const auto person_id = family_id + detail::padded("_P", p + 1, 2);
      const auto person = out.dataset.add_individual(person_id, family_id);
      members.push_back(person);
      std::vector<double> base(dim);
      for (std::size_t d = 0; d < dim; ++d) base[d] = archetype[d] + config.within_family_sigma * normal(rng);

      const auto images = n_images(rng);
      for (std::size_t k = 0; k < images; ++k) {
        const auto image_id = person_id + detail::padded("_I", k, 2);
        out.dataset.add_image(person, image_id, "synthetic:" + image_id);
        std::vector<double> feature(dim);
        for (std::size_t d = 0; d < dim; ++d) feature[d] = base[d] + config.image_noise_sigma * normal(rng);
        out.features.set(image_id, std::move(feature));
      }
      out.individual_bases.push_back(std::move(base));
    }
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        out.dataset.add_pair(members[a], members[b], family_id, kAllRelationships[tag++ % kNumRelationships]);
      }
    }
    out.archetypes.push_back(std::move(archetype));
  }
  out.dataset.validate();
  return out;
}

/// Seeded family-level split into (train, held-out) pair lists.
inline std::pair<std::vector<KinPair>, std::vector<KinPair>> split_by_family(const Dataset& data,
                                                                             double heldout_fraction,
                                                                             std::uint64_t seed) {
  if (!(heldout_fraction > 0 && heldout_fraction < 1)) {
    throw ConfigError("heldout_fraction must lie strictly between 0 and 1");
  }
  auto fams = data.families();
  std::vector<std::string> order(fams.begin(), fams.end());
  Rng rng{derive_seed(seed, "split")};
  std::shuffle(order.begin(), order.end(), rng);
  auto n_heldout = static_cast<std::size_t>(static_cast<double>(order.size()) * heldout_fraction + 0.5);
  if (n_heldout < 2 || n_heldout + 2 > order.size()) {
    throw ConfigError("family split leaves fewer than two families on one side");
  }
  std::set<std::string> heldout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_heldout));
  auto train = data.pairs_where([&](const std::string& f) { return heldout.count(f) == 0; });
  auto test = data.pairs_where([&](const std::string& f) { return heldout.count(f) != 0; });
  return {std::move(train), std::move(test)};
}

}  // namespace kinship
