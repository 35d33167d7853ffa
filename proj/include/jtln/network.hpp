#pragma once

#include "jtln/core_types.hpp"
#include "jtln/rng.hpp"
#include "jtln/sinkhorn.hpp"

#include <cstdint>
#include <vector>

namespace jtln {

// Shared one-hidden-layer ReLU extractor with two linear softmax heads, one
// over the source label set and one over the target label set.
struct ModelParams {
  Matrix extractor_w;  // hidden x input
  Vector extractor_b;  // hidden
  Matrix source_w;     // source classes x hidden
  Vector source_b;
  Matrix target_w;     // target classes x hidden
  Vector target_b;

  Eigen::Index input_dim() const { return extractor_w.cols(); }
  Eigen::Index hidden_dim() const { return extractor_w.rows(); }
  Eigen::Index source_classes() const { return source_w.rows(); }
  Eigen::Index target_classes() const { return target_w.rows(); }

  // Seeded uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer,
  // drawn in the order extractor, target head, source head so runs that only
  // differ in source-head size share the extractor and target-head values.
  static ModelParams init(Eigen::Index input_dim, Eigen::Index hidden_dim,
                          Eigen::Index source_classes, Eigen::Index target_classes, Rng& rng);
  static ModelParams zeros_like(const ModelParams& other);

  void axpy(double alpha, const ModelParams& other);  // *this += alpha * other
  bool all_finite() const;
  void validate() const;
};

// Feature rows with 1-based labels in [1, label_count].
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  int label_count = 0;

  Eigen::Index size() const { return features.rows(); }
  void validate() const;
};

LabeledSet subset(const LabeledSet& set, const std::vector<int>& rows);

struct TrainConfig {
  double lambda_s = 1.0;    // source cross-entropy weight
  double lambda_ot = 0.1;   // transport penalty weight
  SinkhornConfig sinkhorn{};
  double learning_rate = 0.05;
  int batch_size = 16;
  int epochs = 250;
  int hidden_dim = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForwardResult {
  Vector features;  // hidden activations
  Histogram h_s;    // source head output
  Histogram h_t;    // target head output
};

ForwardResult forward(const ModelParams& params, const Eigen::Ref<const Vector>& x);

// -log(pred[label_index]); probabilities are floored at 1e-300.
double cross_entropy(const Histogram& pred, Eigen::Index label_index);

struct ObjectiveComponents {
  double target_ce = 0;
  double source_ce = 0;
  double ot = 0;
};

struct ObjectiveValue {
  double value = 0;
  ObjectiveComponents components;
};

// Three-term batch objective:
//   mean target CE + lambda_s * mean source CE + lambda_ot * mean transport
// where the transport term couples the two head outputs on each target
// sample. Terms with zero weight are skipped and reported as zero.
ObjectiveValue jtln_objective(const ModelParams& params, const LabeledSet& target_batch,
                              const LabeledSet& source_batch, const CostMatrix& cost,
                              const TrainConfig& config);

// Analytic gradient of the batch objective w.r.t. every parameter. The
// cross-entropy terms use the standard softmax gradients; the transport term
// feeds the dual-potential gradients of each per-sample solve through the two
// softmax Jacobians and the shared extractor, holding the potentials fixed.
ModelParams backward(const ModelParams& params, const LabeledSet& target_batch,
                     const LabeledSet& source_batch, const CostMatrix& cost,
                     const TrainConfig& config);

struct EpochRecord {
  double target_ce = 0;
  double source_ce = 0;
  double ot_loss = 0;
  double objective = 0;
  double test_accuracy = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  ModelParams final_params;
};

// Fraction of samples whose target-head argmax matches the label.
double evaluate_accuracy(const ModelParams& params, const LabeledSet& set);

// The model init used by train(), exposed so multi-phase schedules can start
// from the identical seeded state.
ModelParams seeded_init(Eigen::Index input_dim, int hidden_dim, Eigen::Index source_classes,
                        Eigen::Index target_classes, std::uint64_t seed);

// Redraws only the target head from its own stream, leaving the extractor and
// source head in place.
void reinitialize_target_head(ModelParams& params, std::uint64_t seed);

// Seeded mini-batch SGD on the three-term objective. Each step pairs one
// target batch with one source batch; the source iterator cycles with its own
// reshuffling stream. Per-epoch records hold step-averaged losses and the
// test accuracy at the end of the epoch. Deterministic given the seed; aborts
// with NonFiniteLoss if the objective leaves the finite range.
TrainReport train(const LabeledSet& target_train, const LabeledSet& source, const CostMatrix& cost,
                  const TrainConfig& config, const LabeledSet& target_test);

// Same SGD loop starting from caller-provided parameters.
TrainReport train_from(ModelParams initial, const LabeledSet& target_train,
                       const LabeledSet& source, const CostMatrix& cost, const TrainConfig& config,
                       const LabeledSet& target_test);

// Source-classification phase of the two-stage baseline: SGD on the source
// cross-entropy through the extractor and source head only. The target head
// is left untouched.
ModelParams train_source_phase(ModelParams params, const LabeledSet& source,
                               const TrainConfig& config);

}  // namespace jtln
