#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "kinship/sampler.hpp"
#include "kinship/synthetic.hpp"

namespace kinship {
namespace {

// `families` families with two individuals each and `images` images per person.
Dataset toy_dataset(std::size_t families, std::size_t images = 1) {
  Dataset data;
  for (std::size_t f = 0; f < families; ++f) {
    const auto fam = "F" + std::to_string(f);
    const auto a = data.add_individual(fam + "_a", fam);
    const auto b = data.add_individual(fam + "_b", fam);
    for (std::size_t k = 0; k < images; ++k) {
      data.add_image(a, fam + "_a_" + std::to_string(k), "");
      data.add_image(b, fam + "_b_" + std::to_string(k), "");
    }
    data.add_pair(a, b, fam, Relationship::BB);
  }
  return data;
}

TEST(Sampler, EpochOrderIsSeededPermutation) {
  const auto data = toy_dataset(10);
  Sampler s1(data, data.pairs(), 4, 1), s2(data, data.pairs(), 4, 1);
  auto order = s1.epoch_order();
  EXPECT_EQ(order, s2.epoch_order());
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> iota(10);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  EXPECT_EQ(order, iota);
  for (std::size_t i = 0; i < data.images().size(); ++i) EXPECT_EQ(s1.count(i), 0u);
}

TEST(Sampler, ConfigurationErrors) {
  const auto data = toy_dataset(3);
  EXPECT_THROW(Sampler(data, data.pairs(), 1, 0), ConfigError);
  EXPECT_THROW(Sampler(data, {}, 4, 0), ConfigError);
}

TEST(Sampler, DifferentSeedsGiveDifferentOrders) {
  const auto data = toy_dataset(10);
  int differ = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Sampler a(data, data.pairs(), 4, 2 * s), b(data, data.pairs(), 4, 2 * s + 1);
    differ += a.epoch_order() != b.epoch_order();
  }
  EXPECT_GE(differ, 99);
}

TEST(Sampler, FourDistinctFamiliesBatchSizeTwo) {
  const auto data = toy_dataset(4);
  Sampler s(data, data.pairs(), 2, 5);
  int batches = 0;
  while (auto b = s.next_batch()) {
    EXPECT_EQ(b->size(), 2u);
    EXPECT_TRUE(audit_batch(data, *b).empty());
    ++batches;
  }
  EXPECT_EQ(batches, 2);
  EXPECT_EQ(s.displacements(), 0u);
  for (std::size_t i = 0; i < data.images().size(); ++i) EXPECT_EQ(s.count(i), 1u);
}

TEST(Sampler, SingleFamilyYieldsNoBatchAndWarns) {
  Dataset data;
  const auto a = data.add_individual("a", "F");
  const auto b = data.add_individual("b", "F");
  const auto c = data.add_individual("c", "F");
  for (auto p : {a, b, c}) data.add_image(p, data.individual(p).person_id + ".jpg", "");
  data.add_pair(a, b, "F", Relationship::SS);
  data.add_pair(a, c, "F", Relationship::SS);
  Sampler s(data, data.pairs(), 2, 0);
  EXPECT_FALSE(s.next_batch().has_value());
  ASSERT_EQ(s.warnings().size(), 1u);
  EXPECT_FALSE(s.next_batch().has_value());
  EXPECT_EQ(s.warnings().size(), 1u);
  EXPECT_THROW(s.next_batch_cycling(), ConfigError);
}

TEST(Sampler, DuplicatesAreReplacedWithinTheEpoch) {
  // Families with several pairs force displacements; every pair is still
  // served at most once per epoch.
  SyntheticConfig cfg;
  cfg.num_families = 12;
  cfg.individuals_min = 3;
  cfg.individuals_max = 4;
  const auto synth = generate_synthetic(cfg);
  const auto& data = synth.dataset;
  Sampler s(data, data.pairs(), 4, 9);
  std::vector<int> served(data.pairs().size(), 0);
  while (auto b = s.next_batch()) {
    EXPECT_TRUE(audit_batch(data, *b).empty());
    EXPECT_GE(b->size(), 2u);
    EXPECT_LE(b->size(), 4u);
    for (const auto& item : b->items) ++served[item.pair_index];
  }
  EXPECT_GT(s.displacements(), 0u);
  const auto total = std::accumulate(served.begin(), served.end(), 0);
  EXPECT_LE(static_cast<std::size_t>(total), data.pairs().size());
  for (int n : served) EXPECT_LE(n, 1);
}

TEST(Sampler, BalanceHoldsAcrossEpochs) {
  SyntheticConfig cfg;
  cfg.num_families = 20;
  cfg.images_min = 1;
  cfg.images_max = 5;
  const auto synth = generate_synthetic(cfg);
  Sampler s(synth.dataset, synth.dataset.pairs(), 6, 4);
  for (int epoch = 0; epoch < 15; ++epoch) {
    if (epoch) s.start_epoch();
    while (auto b = s.next_batch()) {
      EXPECT_TRUE(audit_batch(synth.dataset, *b).empty());
      EXPECT_LE(max_count_spread(s), 1u);
    }
  }
}

TEST(Sampler, TwoImageIndividualStaysBalancedOverThreeEpochs) {
  auto data = toy_dataset(3, 2);
  Sampler s(data, data.pairs(), 2, 0);
  const auto person = *data.find_person("F0_a");
  const auto a = data.individual(person).images[0], b = data.individual(person).images[1];
  std::size_t served = 0;
  for (int epoch = 0; epoch < 3; ++epoch) {
    if (epoch) s.start_epoch();
    while (auto batch = s.next_batch()) {
      for (const auto& item : batch->items) served += item.pair.person1 == person;
    }
  }
  EXPECT_EQ(s.count(a) + s.count(b), served);
  const auto diff = s.count(a) > s.count(b) ? s.count(a) - s.count(b) : s.count(b) - s.count(a);
  EXPECT_LE(diff, 1u);
}

TEST(SelectLeastSeen, TieBreakAndMinimum) {
  Dataset data;
  const auto p = data.add_individual("p", "F");
  // Added out of id order so the tie-break cannot rely on insertion order.
  const auto b = data.add_image(p, "b", "");
  const auto a = data.add_image(p, "a", "");
  const auto c = data.add_image(p, "c", "");
  std::vector<std::size_t> counts(3, 0);
  EXPECT_EQ(select_least_seen(data, data.individual(p), counts), a);
  counts[a] = 3;
  counts[b] = 1;
  counts[c] = 2;
  EXPECT_EQ(select_least_seen(data, data.individual(p), counts), b);
}

TEST(SelectLeastSeen, IncrementingStaysBalanced) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 7, k = rng() % 40;
    Dataset data;
    const auto p = data.add_individual("p", "F");
    for (std::size_t i = 0; i < m; ++i) data.add_image(p, "img" + std::to_string(rng() % 1000) + "_" + std::to_string(i), "");
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t step = 0; step < k; ++step) ++counts[select_least_seen(data, data.individual(p), counts)];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
  }
}

TEST(Sampler, ImageWithoutPersonImagesIsValidationError) {
  Dataset data;
  const auto p = data.add_individual("p", "F");
  EXPECT_THROW(select_least_seen(data, data.individual(p), std::vector<std::size_t>{}), ValidationError);
}

}  // namespace
}  // namespace kinship
