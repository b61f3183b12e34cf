#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kinship/dataset.hpp"
#include "kinship/errors.hpp"
#include "kinship/random.hpp"

namespace kinship {

struct BatchItem {
  std::size_t pair_index = 0;  // into Sampler::relationships()
  std::size_t image_x = 0;     // an image of pair.person1
  std::size_t image_y = 0;     // an image of pair.person2
  KinPair pair;
};

/// Kin pairs from pairwise-distinct families.
struct Batch {
  std::vector<BatchItem> items;

  std::size_t size() const noexcept { return items.size(); }
};

/// Least-used image of an individual; ties go to the lexicographically
/// smallest image id.
inline std::size_t select_least_seen(const Dataset& data, const Individual& person,
                                     std::span<const std::size_t> counts) {
  if (person.images.empty()) throw ValidationError("person '" + person.person_id + "' has no images");
  std::size_t best = person.images.front();
  for (auto img : person.images) {
    if (counts[img] < counts[best] ||
        (counts[img] == counts[best] && data.image(img).image_id < data.image(best).image_id)) {
      best = img;
    }
  }
  return best;
}

/// Balanced, family-distinct batch sampler.
///
/// Each epoch walks a seeded shuffle of the pair list in windows of
/// batch_size. A pair whose family already occurs in the window is swapped
/// with the first not-yet-consumed pair of an absent family; the displaced
/// pair goes back into the pool at that position. Without any candidate the
/// duplicate is pushed to the end of the pool and the window shrinks. Windows
/// left with fewer than two pairs are dropped. Each pair then draws the
/// least-seen image of both individuals. Image counters persist across epochs.
///
/// The Dataset must outlive the sampler.
class Sampler {
 public:
  Sampler(const Dataset& data, std::vector<KinPair> relationships, std::size_t batch_size, std::uint64_t seed)
      : data_(&data), relationships_(std::move(relationships)), batch_size_(batch_size), rng_(seed) {
    if (relationships_.empty()) throw ConfigError("sampler: relationships must be non-empty");
    if (batch_size_ < 2) throw ConfigError("sampler: batch_size must be at least 2");
    counts_.assign(data.images().size(), 0);
    covered_.assign(data.images().size(), false);
    for (const auto& pair : relationships_) {
      data.check_pair(pair);
      for (auto person : {pair.person1, pair.person2}) {
        for (auto img : data.individual(person).images) covered_[img] = true;
      }
    }
    start_epoch();
  }

  const Dataset& dataset() const noexcept { return *data_; }
  const std::vector<KinPair>& relationships() const noexcept { return relationships_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t epoch() const noexcept { return epoch_; }
  const std::vector<std::size_t>& epoch_order() const noexcept { return order_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  std::size_t dropped_windows() const noexcept { return dropped_windows_; }
  std::size_t displacements() const noexcept { return displacements_; }

  bool covers(std::size_t image) const { return image < covered_.size() && covered_[image]; }

  std::size_t count(std::size_t image) const {
    if (!covers(image)) throw DomainError("image is not served by this sampler");
    return counts_[image];
  }

  /// Reshuffles the pair list and begins the next epoch. Counters are kept.
  void start_epoch() {
    order_.resize(relationships_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    pending_.assign(order_.begin(), order_.end());
    ++epoch_;
    batches_this_epoch_ = 0;
    warned_ = false;
  }

  /// Next batch of the current epoch, or nullopt once the epoch is exhausted.
  std::optional<Batch> next_batch() {
    while (!pending_.empty()) {
      const auto take = std::min(batch_size_, pending_.size());
      std::vector<std::size_t> window(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(take));
      pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(take));

      std::set<std::string> families;
      std::vector<std::size_t> kept;
      for (std::size_t pos = 0; pos < window.size(); ++pos) {
        const auto idx = window[pos];
        if (families.insert(family(idx)).second) {
          kept.push_back(idx);
          continue;
        }
        auto absent = [&](const std::string& f) {
          if (families.count(f)) return false;
          for (std::size_t later = pos + 1; later < window.size(); ++later) {
            if (family(window[later]) == f) return false;
          }
          return true;
        };
        auto candidate = std::find_if(pending_.begin(), pending_.end(),
                                      [&](std::size_t p) { return absent(family(p)); });
        ++displacements_;
        if (candidate != pending_.end()) {
          const auto replacement = *candidate;
          *candidate = idx;
          families.insert(family(replacement));
          kept.push_back(replacement);
        } else {
          pending_.push_back(idx);
        }
      }

      if (kept.size() < 2) {
        ++dropped_windows_;
        continue;
      }
      Batch batch;
      batch.items.reserve(kept.size());
      for (auto idx : kept) {
        const auto& pair = relationships_[idx];
        const auto img1 = select_least_seen(*data_, data_->individual(pair.person1), counts_);
        ++counts_[img1];
        const auto img2 = select_least_seen(*data_, data_->individual(pair.person2), counts_);
        ++counts_[img2];
        batch.items.push_back(BatchItem{idx, img1, img2, pair});
      }
      ++batches_this_epoch_;
      return batch;
    }
    if (batches_this_epoch_ == 0 && !warned_) {
      warnings_.push_back("epoch " + std::to_string(epoch_) +
                          " produced no valid batch (fewer than two distinct families available)");
      warned_ = true;
    }
    return std::nullopt;
  }

  /// Endless stream across epochs. Throws if a whole epoch cannot form a batch.
  Batch next_batch_cycling() {
    if (auto b = next_batch()) return *std::move(b);
    start_epoch();
    if (auto b = next_batch()) return *std::move(b);
    throw ConfigError("sampler: no valid batch can be formed (fewer than two distinct families)");
  }

 private:
  const std::string& family(std::size_t pair_index) const { return relationships_[pair_index].family_id; }

  const Dataset* data_;
  std::vector<KinPair> relationships_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> counts_;
  std::vector<bool> covered_;
  std::vector<std::size_t> order_;
  std::deque<std::size_t> pending_;
  std::size_t epoch_ = 0;
  std::size_t batches_this_epoch_ = 0;
  bool warned_ = false;
  std::size_t dropped_windows_ = 0;
  std::size_t displacements_ = 0;
  std::vector<std::string> warnings_;
};

/// Checks one emitted batch against the sampler guarantees; returns one
/// message per violation.
inline std::vector<std::string> audit_batch(const Dataset& data, const Batch& batch) {
  std::vector<std::string> violations;
  std::set<std::string> families;
  for (const auto& item : batch.items) {
    if (!families.insert(item.pair.family_id).second) {
      violations.push_back("distinct-family: family '" + item.pair.family_id + "' repeated");
    }
    const bool listed = std::find(data.pairs().begin(), data.pairs().end(), item.pair) != data.pairs().end();
    if (!listed) {
      violations.push_back("validity: pair " + data.individual(item.pair.person1).person_id + "/" +
                           data.individual(item.pair.person2).person_id + " is not a listed kin pair");
    }
    if (data.image(item.image_x).person != item.pair.person1 || data.image(item.image_y).person != item.pair.person2) {
      violations.push_back("validity: served image does not belong to its pair member");
    }
  }
  return violations;
}

/// Per-individual image-count spread (max - min) over every covered individual.
inline std::size_t max_count_spread(const Sampler& sampler) {
  const auto& data = sampler.dataset();
  std::size_t worst = 0;
  for (const auto& person : data.individuals()) {
    if (person.images.empty() || !sampler.covers(person.images.front())) continue;
    std::size_t lo = static_cast<std::size_t>(-1), hi = 0;
    for (auto img : person.images) {
      lo = std::min(lo, sampler.count(img));
      hi = std::max(hi, sampler.count(img));
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

}  // namespace kinship
