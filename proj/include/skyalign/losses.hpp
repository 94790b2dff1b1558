#pragma once

#include <array>
#include <span>
#include <vector>

#include "skyalign/geometry.hpp"

namespace skyalign::align {

using Vec = std::vector<double>;

// Similarity used inside the contrastive softmaxes. Cosine normalizes both
// sides internally and chains the normalization Jacobian into the returned
// gradients, so gradients are always w.r.t. the embeddings as passed in.
enum class Similarity { Cosine, Dot };

double l2_norm(std::span<const double> v);
Vec l2_normalize(std::span<const double> v);  // throws on zero vector

// One contrastive batch: N aerial embeddings with their matched ground
// embeddings, plus the batch's candidate text bags. positive_bags[i] lists
// the bag indices whose members count as positives for sample i (usually a
// single bag).
struct AlignmentBatch {
  std::vector<Vec> aerial;
  std::vector<Vec> ground;
  std::vector<std::vector<Vec>> text_bags;
  std::vector<std::vector<int>> positive_bags;
};

struct LossGrad {
  double value = 0.0;
  std::vector<Vec> grad;  // w.r.t. the aerial (or region) embeddings
};

// InfoNCE over aerial->ground similarities, aerial anchors only; the ground
// side is a frozen reference, so no gradient is produced for it. When
// `symmetric` is set, the ground-anchored direction is averaged in (gradients
// still w.r.t. aerial embeddings only).
LossGrad cross_view_loss(const AlignmentBatch& batch, double rho,
                         Similarity sim = Similarity::Cosine, bool symmetric = false);

// Multi-instance NCE: the positive term sums over every member of the
// sample's positive bag(s); the denominator ranges over every text embedding
// in the batch, positives included. Text side frozen.
LossGrad mil_nce_loss(const AlignmentBatch& batch, double sigma,
                      Similarity sim = Similarity::Cosine);

// Softmax cross-entropy over region-to-prototype similarities scaled by
// 1/temperature. Prototypes (mean text-bag embeddings) are frozen.
LossGrad classification_loss(const std::vector<Vec>& regions, const std::vector<Vec>& prototypes,
                             const std::vector<int>& labels, double temperature,
                             Similarity sim = Similarity::Cosine);

// Class prototype = mean of the bag's embeddings.
Vec bag_prototype(const std::vector<Vec>& bag);

// A prediction carries class probabilities over K real classes plus a final
// no-object entry (size K+1, nonnegative).
struct DetectionPrediction {
  geom::Box2D box;
  Vec class_probs;
};

struct DetectionTarget {
  geom::Box2D box;
  int category;
};

struct DetectionLossConfig {
  // Matching-cost weights.
  double cost_class = 1.0;
  double cost_l1 = 1.0;
  double cost_giou = 1.0;
  // Loss weights.
  double l1_weight = 1.0;
  double giou_weight = 1.0;
  double no_object_weight = 1.0;
};

struct DetectionLossResult {
  double value = 0.0;
  std::vector<std::array<double, 4>> box_grad;  // per prediction
  geom::Assignment matching;
};

// Bipartite-matching set loss: Hungarian assignment on a class+box cost
// matrix, box regression over matched pairs, cross-entropy for matched
// classes and the no-object class for unmatched predictions. Gradients w.r.t.
// box coordinates only; the matching is treated as a constant.
DetectionLossResult detection_set_loss(const std::vector<DetectionPrediction>& predicted,
                                       const std::vector<DetectionTarget>& targets,
                                       const DetectionLossConfig& config = {});

struct LossConfig {
  double rho = 0.07;    // Eq-style temperature for the cross-view loss
  double sigma = 0.07;  // temperature for the multi-instance text loss
  double cls_temperature = 0.07;
  double w_ag = 1.0;  // aerial-ground
  double w_at = 1.0;  // aerial-text
  double w_cls = 1.0;
  double w_box = 1.0;
  Similarity sim = Similarity::Cosine;
  bool symmetric_cross_view = false;
  DetectionLossConfig detection;
};

struct TotalLossResult {
  double value = 0.0;
  double l_ag = 0.0, l_at = 0.0, l_cls = 0.0, l_box = 0.0;  // unweighted components
  std::vector<Vec> grad_aerial;                              // weighted sum
  std::vector<std::array<double, 4>> box_grad;               // weighted
};

// Weighted joint objective. The classification term reuses the batch's aerial
// embeddings as regions against the candidate bags' prototypes; it is skipped
// (component 0) when the batch carries no text bags, as is the text loss.
// Detection inputs may be empty.
TotalLossResult total_loss(const AlignmentBatch& batch,
                           const std::vector<DetectionPrediction>& predicted,
                           const std::vector<DetectionTarget>& targets, const LossConfig& config);

}  // namespace skyalign::align
