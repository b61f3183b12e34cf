#pragma once

#include <utility>
#include <vector>

#include "kinship/config.hpp"
#include "kinship/evaluation.hpp"
#include "kinship/models.hpp"
#include "kinship/sampler.hpp"
#include "kinship/synthetic.hpp"
#include "kinship/training.hpp"

namespace kinship {

/// Synthetic data with a family-disjoint train / held-out split.
struct SyntheticSplit {
  SyntheticData data;
  Matrix<Real> features;  // one row per dataset image
  std::vector<KinPair> train;
  std::vector<KinPair> heldout;
};

inline SyntheticSplit make_synthetic_split(const RunConfig& config) {
  SyntheticSplit s{generate_synthetic(config.synth), {}, {}, {}};
  s.features = s.data.features.matrix_for(s.data.dataset);
  std::tie(s.train, s.heldout) = split_by_family(s.data.dataset, config.heldout_fraction, config.seed);
  return s;
}

/// Stage 1 from a fresh initialisation.
inline std::pair<KinshipModel, TrainingLog> pretrain(const SyntheticSplit& split, const RunConfig& config) {
  auto model = KinshipModel::create(config.model);
  Sampler sampler(split.data.dataset, split.train, config.stage1.batch_size, derive_seed(config.seed, "sampler"));
  auto log = train_contrastive(split.features, sampler, model, config.stage1);
  return {std::move(model), std::move(log)};
}

/// Stage 2 on a copy of `pretrained`, then held-out evaluation.
struct ClassifierRun {
  KinshipModel model;
  TrainingLog log;
  EvaluationReport report;
};

inline ClassifierRun train_and_evaluate(const SyntheticSplit& split, const KinshipModel& pretrained,
                                        const RunConfig& config) {
  ClassifierRun run{pretrained, {}, {}};
  Sampler sampler(split.data.dataset, split.train, config.stage2.batch_size, derive_seed(config.seed, "sampler2"));
  run.log = train_classifier(split.features, sampler, run.model, config.stage2);
  const auto pairs = build_eval_pairs(split.data.dataset, split.heldout, config.seed);
  run.report = evaluate(pairs, run.model, split.features, config.threshold);
  return run;
}

}  // namespace kinship
