#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace skyalign::geom {

// Axis-aligned box in corner form, continuous pixel coordinates. Validated on
// construction: strictly positive area, finite coordinates.
struct Box2D {
  double x_min, y_min, x_max, y_max;

  Box2D(double x0, double y0, double x1, double y1);

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  std::array<double, 4> coords() const { return {x_min, y_min, x_max, y_max}; }

  bool operator==(const Box2D&) const = default;
};

struct ScoredDetection {
  Box2D box;
  int category_id;
  double score;  // confidence in [0, 1]

  ScoredDetection(Box2D b, int category, double s);

  bool operator==(const ScoredDetection&) const = default;
};

// Result of minimum-cost bipartite matching. Row and column indices are each
// distinct; |pairs| = min(n_rows, n_cols); pairs sorted by row index.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

double iou(const Box2D& a, const Box2D& b);

// IoU minus (hull - union)/hull; in (-1, 1].
double giou(const Box2D& a, const Box2D& b);

// giou plus its gradient w.r.t. the coordinates of `a` (subgradient at kinks).
double giou_with_grad(const Box2D& a, const Box2D& b, std::array<double, 4>& grad_a);

// Drops detections with score < score_threshold, then greedy class-wise
// suppression: descending score, ties broken by lower input index, a
// detection is suppressed when its IoU with an already kept detection of the
// same class is >= iou_threshold. Output sorted by descending score with the
// same tie-break.
std::vector<ScoredDetection> nms(std::span<const ScoredDetection> dets, double iou_threshold,
                                 double score_threshold);

struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;  // row-major

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Minimum-total-cost assignment (Jonker-Volgenant style shortest augmenting
// paths, O(n^2 m)). Entries must be finite. Empty matrix -> empty assignment.
Assignment hungarian_match(const CostMatrix& cost);

struct BoxLossResult {
  double value = 0.0;
  // d value / d predicted coordinates, one entry per predicted box (zeros for
  // unmatched predictions).
  std::vector<std::array<double, 4>> grad;
};

// Mean over matched pairs of l1_weight * |coords diff|_1 + giou_weight * (1 - giou).
// Empty match set -> zero loss, zero gradient.
BoxLossResult box_regression_loss(std::span<const Box2D> predicted, std::span<const Box2D> target,
                                  const Assignment& matched, double l1_weight,
                                  double giou_weight);

}  // namespace skyalign::geom
