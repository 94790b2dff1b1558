#include "skyalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skyalign/errors.hpp"
#include "skyalign/kernels.hpp"

namespace skyalign::align {

namespace {

void check_dim(const std::vector<Vec>& vs, std::size_t d, const char* what) {
  for (const Vec& v : vs) {
    if (v.size() != d)
      throw ValidationError(std::string(what) + ": inconsistent embedding dimension");
  }
}

// log sum_i exp(z_i) with max-subtraction.
double logsumexp(std::span<const double> z) {
  const double m = kernels::max_value(z);
  if (!std::isfinite(m)) return m;  // empty or all -inf
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

struct Normalized {
  std::vector<Vec> unit;   // normalized copies (or the inputs verbatim in Dot mode)
  std::vector<double> norm;
};

Normalized maybe_normalize(const std::vector<Vec>& vs, Similarity sim, const char* what) {
  Normalized out;
  out.unit.reserve(vs.size());
  out.norm.reserve(vs.size());
  for (const Vec& v : vs) {
    if (sim == Similarity::Cosine) {
      const double n = l2_norm(v);
      if (n == 0.0) throw ValidationError(std::string(what) + ": zero vector cannot be normalized");
      Vec u = v;
      kernels::scale(u, 1.0 / n);
      out.unit.push_back(std::move(u));
      out.norm.push_back(n);
    } else {
      out.unit.push_back(v);
      out.norm.push_back(1.0);
    }
  }
  return out;
}

// Chain a gradient w.r.t. the unit vector back to the raw input:
// d/dv (v/|v|) applied to g is (g - (g.u) u) / |v|.
Vec chain_through_normalize(const Vec& g_unit, const Vec& unit, double norm, Similarity sim) {
  if (sim == Similarity::Dot) return g_unit;
  Vec g = g_unit;
  const double proj = kernels::dot(g_unit, unit);
  kernels::axpy(-proj, unit, g);
  kernels::scale(g, 1.0 / norm);
  return g;
}

}  // namespace

double l2_norm(std::span<const double> v) { return std::sqrt(kernels::squared_norm(v)); }

Vec l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ValidationError("l2_normalize: zero vector");
  Vec out(v.begin(), v.end());
  kernels::scale(out, 1.0 / n);
  return out;
}

LossGrad cross_view_loss(const AlignmentBatch& batch, double rho, Similarity sim,
                         bool symmetric) {
  const std::size_t n = batch.aerial.size();
  if (n == 0) throw ValidationError("cross_view_loss: empty batch");
  if (batch.ground.size() != n)
    throw ValidationError("cross_view_loss: aerial/ground size mismatch");
  if (!(rho > 0.0)) throw ValidationError("cross_view_loss: temperature must be positive");
  const std::size_t d = batch.aerial[0].size();
  check_dim(batch.aerial, d, "cross_view_loss");
  check_dim(batch.ground, d, "cross_view_loss");

  const Normalized a = maybe_normalize(batch.aerial, sim, "cross_view_loss");
  const Normalized g = maybe_normalize(batch.ground, sim, "cross_view_loss");

  // s[i][j] = sim(aerial_i, ground_j) / rho
  std::vector<Vec> s(n, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[i][j] = kernels::dot(a.unit[i], g.unit[j]) / rho;

  LossGrad out;
  out.grad.assign(n, Vec(d, 0.0));
  const double inv_n = 1.0 / static_cast<double>(n);

  Vec lse_row(n), lse_col(n);
  Vec col(n);
  for (std::size_t i = 0; i < n; ++i) lse_row[i] = logsumexp(s[i]);
  if (symmetric) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = s[i][j];
      lse_col[j] = logsumexp(col);
    }
  }

  // dL/ds_ij for the aerial-anchored direction is (softmax_row - delta)/N; the
  // symmetric variant averages in the ground-anchored direction, which only
  // changes the coefficient (gradients stay on the aerial side).
  const double row_weight = symmetric ? 0.5 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.value += row_weight * inv_n * (lse_row[i] - s[i][i]);
    Vec gi(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      double coeff = row_weight * (std::exp(s[i][j] - lse_row[i]) - delta);
      if (symmetric) coeff += 0.5 * (std::exp(s[i][j] - lse_col[j]) - delta);
      kernels::axpy(coeff * inv_n / rho, g.unit[j], gi);
    }
    out.grad[i] = chain_through_normalize(gi, a.unit[i], a.norm[i], sim);
  }
  if (symmetric) {
    for (std::size_t j = 0; j < n; ++j) out.value += 0.5 * inv_n * (lse_col[j] - s[j][j]);
  }
  return out;
}

LossGrad mil_nce_loss(const AlignmentBatch& batch, double sigma, Similarity sim) {
  const std::size_t n = batch.aerial.size();
  if (n == 0) throw ValidationError("mil_nce_loss: empty batch");
  if (!(sigma > 0.0)) throw ValidationError("mil_nce_loss: temperature must be positive");
  if (batch.text_bags.empty()) throw ValidationError("mil_nce_loss: no text bags in batch");
  if (batch.positive_bags.size() != n)
    throw ValidationError("mil_nce_loss: positive_bags must have one entry per sample");
  const std::size_t d = batch.aerial[0].size();
  check_dim(batch.aerial, d, "mil_nce_loss");
  for (const auto& bag : batch.text_bags) {
    if (bag.empty()) throw ValidationError("mil_nce_loss: empty text bag");
    check_dim(bag, d, "mil_nce_loss");
  }

  const std::size_t num_bags = batch.text_bags.size();
  for (const auto& pos : batch.positive_bags) {
    if (pos.empty()) throw ValidationError("mil_nce_loss: sample has no positive bag");
    for (int k : pos) {
      if (k < 0 || static_cast<std::size_t>(k) >= num_bags)
        throw ValidationError("mil_nce_loss: positive bag index out of range");
    }
  }

  const Normalized a = maybe_normalize(batch.aerial, sim, "mil_nce_loss");
  // Flatten the candidate set; remember each member's bag.
  std::vector<const Vec*> text;
  std::vector<std::size_t> member_bag;
  std::vector<Normalized> bags;
  bags.reserve(num_bags);
  for (std::size_t b = 0; b < num_bags; ++b) {
    bags.push_back(maybe_normalize(batch.text_bags[b], sim, "mil_nce_loss"));
    for (const Vec& u : bags.back().unit) {
      text.push_back(&u);
      member_bag.push_back(b);
    }
  }
  const std::size_t t_total = text.size();

  LossGrad out;
  out.grad.assign(n, Vec(d, 0.0));
  const double inv_n = 1.0 / static_cast<double>(n);

  Vec z(t_total), z_pos;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bool> is_pos(t_total, false);
    for (int k : batch.positive_bags[i])
      for (std::size_t t = 0; t < t_total; ++t)
        if (member_bag[t] == static_cast<std::size_t>(k)) is_pos[t] = true;

    z_pos.clear();
    for (std::size_t t = 0; t < t_total; ++t) {
      z[t] = kernels::dot(a.unit[i], *text[t]) / sigma;
      if (is_pos[t]) z_pos.push_back(z[t]);
    }
    const double lse_all = logsumexp(z);
    const double lse_pos = logsumexp(z_pos);
    out.value += inv_n * (lse_all - lse_pos);

    Vec gi(d, 0.0);
    for (std::size_t t = 0; t < t_total; ++t) {
      double coeff = std::exp(z[t] - lse_all);
      if (is_pos[t]) coeff -= std::exp(z[t] - lse_pos);
      kernels::axpy(coeff * inv_n / sigma, *text[t], gi);
    }
    out.grad[i] = chain_through_normalize(gi, a.unit[i], a.norm[i], sim);
  }
  return out;
}

Vec bag_prototype(const std::vector<Vec>& bag) {
  if (bag.empty()) throw ValidationError("bag_prototype: empty bag");
  Vec proto(bag[0].size(), 0.0);
  for (const Vec& v : bag) {
    if (v.size() != proto.size()) throw ValidationError("bag_prototype: dimension mismatch");
    kernels::axpy(1.0, v, proto);
  }
  kernels::scale(proto, 1.0 / static_cast<double>(bag.size()));
  return proto;
}

LossGrad classification_loss(const std::vector<Vec>& regions, const std::vector<Vec>& prototypes,
                             const std::vector<int>& labels, double temperature,
                             Similarity sim) {
  if (regions.empty()) throw ValidationError("classification_loss: no regions");
  if (prototypes.empty()) throw ValidationError("classification_loss: no prototypes");
  if (labels.size() != regions.size())
    throw ValidationError("classification_loss: one label per region required");
  if (!(temperature > 0.0))
    throw ValidationError("classification_loss: temperature must be positive");
  const std::size_t d = regions[0].size();
  check_dim(regions, d, "classification_loss");
  check_dim(prototypes, d, "classification_loss");
  const std::size_t c = prototypes.size();
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c)
      throw ValidationError("classification_loss: label out of range");
  }

  const Normalized r = maybe_normalize(regions, sim, "classification_loss");
  const Normalized p = maybe_normalize(prototypes, sim, "classification_loss");

  LossGrad out;
  out.grad.assign(regions.size(), Vec(d, 0.0));
  const double inv_n = 1.0 / static_cast<double>(regions.size());

  Vec logits(c);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (std::size_t k = 0; k < c; ++k)
      logits[k] = kernels::dot(r.unit[i], p.unit[k]) / temperature;
    const double lse = logsumexp(logits);
    out.value += inv_n * (lse - logits[labels[i]]);

    Vec gi(d, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      const double soft = std::exp(logits[k] - lse);
      const double coeff = (soft - (static_cast<std::size_t>(labels[i]) == k ? 1.0 : 0.0)) *
                           inv_n / temperature;
      kernels::axpy(coeff, p.unit[k], gi);
    }
    out.grad[i] = chain_through_normalize(gi, r.unit[i], r.norm[i], sim);
  }
  return out;
}

DetectionLossResult detection_set_loss(const std::vector<DetectionPrediction>& predicted,
                                       const std::vector<DetectionTarget>& targets,
                                       const DetectionLossConfig& config) {
  DetectionLossResult out;
  out.box_grad.assign(predicted.size(), {0.0, 0.0, 0.0, 0.0});
  if (predicted.empty() && targets.empty()) return out;

  std::size_t num_probs = 0;
  for (const auto& p : predicted) {
    if (num_probs == 0) num_probs = p.class_probs.size();
    if (p.class_probs.size() != num_probs || num_probs < 2)
      throw ValidationError("detection_set_loss: class_probs must share size K+1 >= 2");
    for (double v : p.class_probs)
      if (!(v >= 0.0)) throw ValidationError("detection_set_loss: probabilities must be >= 0");
  }
  if (!predicted.empty()) {
    // Last probability entry is the no-object class.
    for (const auto& t : targets) {
      if (t.category < 0 || static_cast<std::size_t>(t.category) >= num_probs - 1)
        throw ValidationError("detection_set_loss: target category out of range");
    }
  }

  constexpr double kProbFloor = 1e-12;
  auto safe_neg_log = [&](double p) { return -std::log(std::max(p, kProbFloor)); };

  if (!predicted.empty() && !targets.empty()) {
    geom::CostMatrix cost(predicted.size(), targets.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      for (std::size_t j = 0; j < targets.size(); ++j) {
        double l1 = 0.0;
        const auto pc = predicted[i].box.coords();
        const auto tc = targets[j].box.coords();
        for (int k = 0; k < 4; ++k) l1 += std::abs(pc[k] - tc[k]);
        cost.at(i, j) = config.cost_class * (-predicted[i].class_probs[targets[j].category]) +
                        config.cost_l1 * l1 +
                        config.cost_giou * (1.0 - geom::giou(predicted[i].box, targets[j].box));
      }
    }
    out.matching = geom::hungarian_match(cost);
  }

  std::vector<geom::Box2D> pred_boxes;
  std::vector<geom::Box2D> target_boxes;
  pred_boxes.reserve(predicted.size());
  target_boxes.reserve(targets.size());
  for (const auto& p : predicted) pred_boxes.push_back(p.box);
  for (const auto& t : targets) target_boxes.push_back(t.box);

  geom::BoxLossResult box = geom::box_regression_loss(pred_boxes, target_boxes, out.matching,
                                                      config.l1_weight, config.giou_weight);
  out.value = box.value;
  out.box_grad = std::move(box.grad);

  if (!predicted.empty()) {
    const std::size_t no_object = num_probs - 1;
    std::vector<bool> matched(predicted.size(), false);
    double cls = 0.0;
    for (auto [pi, ti] : out.matching.pairs) {
      matched[pi] = true;
      cls += safe_neg_log(predicted[pi].class_probs[targets[ti].category]);
    }
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (!matched[i])
        cls += config.no_object_weight * safe_neg_log(predicted[i].class_probs[no_object]);
    }
    out.value += cls / static_cast<double>(predicted.size());
  }
  return out;
}

TotalLossResult total_loss(const AlignmentBatch& batch,
                           const std::vector<DetectionPrediction>& predicted,
                           const std::vector<DetectionTarget>& targets,
                           const LossConfig& config) {
  if (config.w_ag < 0 || config.w_at < 0 || config.w_cls < 0 || config.w_box < 0)
    throw ValidationError("total_loss: loss weights must be nonnegative");

  const std::size_t n = batch.aerial.size();
  const std::size_t d = n > 0 ? batch.aerial[0].size() : 0;
  TotalLossResult out;
  out.grad_aerial.assign(n, Vec(d, 0.0));

  if (n > 0) {
    LossGrad ag = cross_view_loss(batch, config.rho, config.sim, config.symmetric_cross_view);
    out.l_ag = ag.value;
    for (std::size_t i = 0; i < n; ++i) kernels::axpy(config.w_ag, ag.grad[i], out.grad_aerial[i]);

    if (!batch.text_bags.empty()) {
      LossGrad at = mil_nce_loss(batch, config.sigma, config.sim);
      out.l_at = at.value;
      for (std::size_t i = 0; i < n; ++i)
        kernels::axpy(config.w_at, at.grad[i], out.grad_aerial[i]);

      std::vector<Vec> prototypes;
      prototypes.reserve(batch.text_bags.size());
      for (const auto& bag : batch.text_bags) prototypes.push_back(bag_prototype(bag));
      std::vector<int> labels;
      labels.reserve(n);
      for (const auto& pos : batch.positive_bags) {
        if (pos.empty()) throw ValidationError("total_loss: sample without positive bag");
        labels.push_back(pos.front());
      }
      LossGrad cls = classification_loss(batch.aerial, prototypes, labels,
                                         config.cls_temperature, config.sim);
      out.l_cls = cls.value;
      for (std::size_t i = 0; i < n; ++i)
        kernels::axpy(config.w_cls, cls.grad[i], out.grad_aerial[i]);
    }
  }

  if (!predicted.empty() || !targets.empty()) {
    DetectionLossResult det = detection_set_loss(predicted, targets, config.detection);
    out.l_box = det.value;
    out.box_grad.assign(det.box_grad.size(), {0.0, 0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < det.box_grad.size(); ++i)
      for (int k = 0; k < 4; ++k) out.box_grad[i][k] = config.w_box * det.box_grad[i][k];
  }

  out.value = config.w_ag * out.l_ag + config.w_at * out.l_at + config.w_cls * out.l_cls +
              config.w_box * out.l_box;
  return out;
}

}  // namespace skyalign::align
