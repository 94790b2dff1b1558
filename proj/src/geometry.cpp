#include "skyalign/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "skyalign/errors.hpp"

namespace skyalign::geom {

namespace {

bool all_finite(double a, double b, double c, double d) {
  return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d);
}

}  // namespace

Box2D::Box2D(double x0, double y0, double x1, double y1)
    : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
  if (!all_finite(x0, y0, x1, y1))
    throw ValidationError("Box2D: coordinates must be finite");
  if (!(x_max > x_min) || !(y_max > y_min))
    throw ValidationError("Box2D: requires x_max > x_min and y_max > y_min");
}

ScoredDetection::ScoredDetection(Box2D b, int category, double s)
    : box(b), category_id(category), score(s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw ValidationError("ScoredDetection: score must lie in [0, 1], got " +
                          std::to_string(s));
}

double iou(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box2D& a, const Box2D& b) {
  std::array<double, 4> ignored;
  return giou_with_grad(a, b, ignored);
}

double giou_with_grad(const Box2D& a, const Box2D& b, std::array<double, 4>& grad_a) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const bool overlaps = iw > 0.0 && ih > 0.0;
  const double inter = overlaps ? iw * ih : 0.0;

  const double area_a = a.area();
  const double uni = area_a + b.area() - inter;

  const double hx = std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min);
  const double hy = std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min);
  const double hull = hx * hy;

  // d(area_a)/d(a coords)
  const double w = a.width(), h = a.height();
  const std::array<double, 4> dA = {-h, -w, h, w};

  // d(inter)/d(a coords): only the side of a that forms the intersection edge.
  std::array<double, 4> dI = {0, 0, 0, 0};
  if (overlaps) {
    if (a.x_min > b.x_min) dI[0] = -ih;
    if (a.y_min > b.y_min) dI[1] = -iw;
    if (a.x_max < b.x_max) dI[2] = ih;
    if (a.y_max < b.y_max) dI[3] = iw;
  }

  // d(hull)/d(a coords): only the side of a that forms the hull edge.
  std::array<double, 4> dC = {0, 0, 0, 0};
  if (a.x_min < b.x_min) dC[0] = -hy;
  if (a.y_min < b.y_min) dC[1] = -hx;
  if (a.x_max > b.x_max) dC[2] = hy;
  if (a.y_max > b.y_max) dC[3] = hx;

  // giou = I/U - (C - U)/C = I/U - 1 + U/C
  for (int k = 0; k < 4; ++k) {
    const double dU = dA[k] - dI[k];
    grad_a[k] = (dI[k] * uni - inter * dU) / (uni * uni) +
                (dU * hull - uni * dC[k]) / (hull * hull);
  }
  return inter / uni - (hull - uni) / hull;
}

std::vector<ScoredDetection> nms(std::span<const ScoredDetection> dets, double iou_threshold,
                                 double score_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    throw ValidationError("nms: iou_threshold must lie in [0, 1]");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
    throw ValidationError("nms: score_threshold must lie in [0, 1]");

  std::vector<std::size_t> order;
  order.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= score_threshold) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
    if (dets[lhs].score != dets[rhs].score) return dets[lhs].score > dets[rhs].score;
    return lhs < rhs;
  });

  std::vector<ScoredDetection> kept;
  kept.reserve(order.size());
  for (std::size_t idx : order) {
    const ScoredDetection& cand = dets[idx];
    bool suppressed = false;
    for (const ScoredDetection& k : kept) {
      if (k.category_id == cand.category_id && iou(k.box, cand.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

Assignment hungarian_match(const CostMatrix& cost) {
  Assignment result;
  if (cost.rows == 0 || cost.cols == 0) return result;
  for (double v : cost.data) {
    if (!std::isfinite(v)) throw ValidationError("hungarian_match: cost entries must be finite");
  }

  // Work on the transposed matrix when rows > cols so that n <= m.
  const bool transposed = cost.rows > cost.cols;
  const std::size_t n = transposed ? cost.cols : cost.rows;
  const std::size_t m = transposed ? cost.rows : cost.cols;
  auto entry = [&](std::size_t i, std::size_t j) {
    return transposed ? cost.at(j, i) : cost.at(i, j);
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0);  // match[j] = row assigned to column j (1-based)
  std::vector<std::size_t> way(m + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    const std::size_t row = match[j] - 1, col = j - 1;
    if (transposed)
      result.pairs.emplace_back(col, row);
    else
      result.pairs.emplace_back(row, col);
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  for (auto [r, c] : result.pairs) result.total_cost += cost.at(r, c);
  return result;
}

BoxLossResult box_regression_loss(std::span<const Box2D> predicted, std::span<const Box2D> target,
                                  const Assignment& matched, double l1_weight,
                                  double giou_weight) {
  BoxLossResult out;
  out.grad.assign(predicted.size(), {0.0, 0.0, 0.0, 0.0});
  if (matched.pairs.empty()) return out;

  for (auto [pi, ti] : matched.pairs) {
    if (pi >= predicted.size() || ti >= target.size())
      throw ValidationError("box_regression_loss: matched index out of range");
  }

  const double inv_m = 1.0 / static_cast<double>(matched.pairs.size());
  for (auto [pi, ti] : matched.pairs) {
    const Box2D& p = predicted[pi];
    const Box2D& t = target[ti];
    const auto pc = p.coords();
    const auto tc = t.coords();

    double l1 = 0.0;
    for (int k = 0; k < 4; ++k) l1 += std::abs(pc[k] - tc[k]);

    std::array<double, 4> dg;
    const double g = giou_with_grad(p, t, dg);
    out.value += inv_m * (l1_weight * l1 + giou_weight * (1.0 - g));

    for (int k = 0; k < 4; ++k) {
      const double sign = pc[k] > tc[k] ? 1.0 : (pc[k] < tc[k] ? -1.0 : 0.0);
      out.grad[pi][k] += inv_m * (l1_weight * sign - giou_weight * dg[k]);
    }
  }
  return out;
}

}  // namespace skyalign::geom
