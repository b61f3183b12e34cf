#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinship/dataset.hpp"
#include "kinship/errors.hpp"
#include "kinship/models.hpp"
#include "kinship/random.hpp"
#include "kinship/relationship.hpp"
#include "kinship/sampler.hpp"

namespace kinship {

struct EvalPair {
  std::size_t image_x = 0;
  std::size_t image_y = 0;
  bool kin = false;
  // For non-kin pairs: the type of the positive pool the negative was drawn against.
  Relationship relationship = Relationship::BB;
};

/// One positive per listed pair plus one negative against the same
/// relationship-type pool: person1 of the positive is matched with person2 of
/// a same-type positive from another family (any other family if the type
/// has only one). Images are chosen least-seen first.
inline std::vector<EvalPair> build_eval_pairs(const Dataset& data, const std::vector<KinPair>& positives,
                                              std::uint64_t seed) {
  if (positives.empty()) throw ConfigError("build_eval_pairs: no positive pairs");
  std::set<std::string> families;
  for (const auto& p : positives) families.insert(p.family_id);
  if (families.size() < 2) throw ConfigError("build_eval_pairs: negatives need at least two families");

  std::array<std::vector<std::size_t>, kNumRelationships> by_type;
  for (std::size_t i = 0; i < positives.size(); ++i) by_type[index_of(positives[i].relationship)].push_back(i);

  Rng rng{derive_seed(seed, "eval-pairs")};
  std::vector<std::size_t> counts(data.images().size(), 0);
  auto least_seen = [&](std::size_t person) {
    const auto img = select_least_seen(data, data.individual(person), counts);
    ++counts[img];
    return img;
  };

  std::vector<EvalPair> out;
  out.reserve(2 * positives.size());
  for (const auto& pos : positives) {
    const auto x = least_seen(pos.person1);
    const auto y = least_seen(pos.person2);
    out.push_back({x, y, true, pos.relationship});

    std::vector<std::size_t> pool;
    for (auto j : by_type[index_of(pos.relationship)]) {
      if (positives[j].family_id != pos.family_id) pool.push_back(j);
    }
    if (pool.empty()) {
      for (std::size_t j = 0; j < positives.size(); ++j) {
        if (positives[j].family_id != pos.family_id) pool.push_back(j);
      }
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const auto& other = positives[pool[pick(rng)]];
    const auto nx = least_seen(pos.person1);
    const auto ny = least_seen(other.person2);
    out.push_back({nx, ny, false, pos.relationship});
  }
  return out;
}

struct EvaluationReport {
  std::array<double, kNumRelationships> accuracy{};
  std::array<std::size_t, kNumRelationships> pairs{};
  std::array<std::size_t, kNumRelationships> correct{};
  double average = 0;          // unweighted mean over types with at least one pair
  double pair_weighted = 0;    // correct / total over all pairs
  std::size_t total_pairs = 0;

  bool has(Relationship r) const { return pairs[index_of(r)] > 0; }
  double operator[](Relationship r) const { return accuracy[index_of(r)]; }
};

/// Score in [0,1] for one evaluation pair (probability of kin).
using PairScorer = std::function<double(const EvalPair&)>;

/// A pair counts as correct when (score ≥ threshold) equals its label.
inline EvaluationReport evaluate(const std::vector<EvalPair>& pairs, const PairScorer& score, double threshold = 0.5) {
  if (pairs.empty()) throw ConfigError("evaluate: empty evaluation pair list");
  EvaluationReport r;
  for (const auto& p : pairs) {
    const auto t = index_of(p.relationship);
    ++r.pairs[t];
    if ((score(p) >= threshold) == p.kin) ++r.correct[t];
  }
  std::size_t types = 0, correct = 0;
  double sum = 0;
  for (auto rel : kAllRelationships) {
    const auto t = index_of(rel);
    if (r.pairs[t] == 0) continue;
    r.accuracy[t] = static_cast<double>(r.correct[t]) / static_cast<double>(r.pairs[t]);
    sum += r.accuracy[t];
    ++types;
    correct += r.correct[t];
    r.total_pairs += r.pairs[t];
  }
  r.average = sum / static_cast<double>(types);
  r.pair_weighted = static_cast<double>(correct) / static_cast<double>(r.total_pairs);
  return r;
}

/// Scores every pair with the model. Embeddings are computed once per image.
inline std::vector<double> score_pairs(const KinshipModel& model, const Matrix<Real>& features,
                                       const std::vector<EvalPair>& pairs) {
  if (model.encoder.embedding_dim() != model.classifier.embedding_dim()) {
    throw DomainError("score_pairs: encoder and classifier dimensions disagree");
  }
  const Matrix<Real> h = model.encoder.encode(features);
  std::vector<std::size_t> left, right;
  for (const auto& p : pairs) {
    left.push_back(p.image_x);
    right.push_back(p.image_y);
  }
  const Matrix<Real> logits = model.classifier.logits(fuse_rows<Real>(h, left, right));
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i] = probability_from_logit(static_cast<double>(logits(static_cast<Eigen::Index>(i), 0)));
  }
  return out;
}

inline EvaluationReport evaluate(const std::vector<EvalPair>& pairs, const KinshipModel& model,
                                 const Matrix<Real>& features, double threshold = 0.5) {
  const auto scores = score_pairs(model, features, pairs);
  return evaluate(
      pairs, [&](const EvalPair& p) { return scores[static_cast<std::size_t>(&p - pairs.data())]; }, threshold);
}

namespace detail {
inline std::string percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}
}  // namespace detail

/// Aligned table: method name, the eleven relationship columns in FIW order,
/// the unweighted average and the pair-weighted average. Types without pairs
/// print "/".
inline void write_report_table(std::ostream& out, const EvaluationReport& r, const std::string& method = "model") {
  const int name_w = static_cast<int>(std::max<std::size_t>(method.size(), 6));
  out << std::left << std::setw(name_w) << "Method" << std::right;
  for (auto rel : kAllRelationships) out << std::setw(7) << to_string(rel);
  out << std::setw(7) << "Ave." << std::setw(10) << "Ave.(pw)" << '\n';
  out << std::left << std::setw(name_w) << method << std::right;
  for (auto rel : kAllRelationships) out << std::setw(7) << (r.has(rel) ? detail::percent(r[rel]) : "/");
  out << std::setw(7) << detail::percent(r.average) << std::setw(10) << detail::percent(r.pair_weighted) << '\n';
}

/// Machine-readable form: one row per relationship type, then both averages.
inline void write_report_csv(std::ostream& out, const EvaluationReport& r) {
  out << "relationship,accuracy,correct,pairs\n";
  out << std::setprecision(17);
  for (auto rel : kAllRelationships) {
    const auto t = index_of(rel);
    out << to_string(rel) << ',';
    if (r.pairs[t]) out << r.accuracy[t];
    out << ',' << r.correct[t] << ',' << r.pairs[t] << '\n';
  }
  std::size_t correct = 0;
  for (auto c : r.correct) correct += c;
  out << "AVERAGE," << r.average << ",," << r.total_pairs << '\n';
  out << "AVERAGE_PAIR_WEIGHTED," << r.pair_weighted << ',' << correct << ',' << r.total_pairs << '\n';
}

}  // namespace kinship
