// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "core/nn_ops.hpp"

namespace mtvl::model {

// Plain-value box helpers (matching costs, evaluation) plus differentiable
// GIoU/L1 losses built from tensor ops. Boxes are normalized cxcywh unless a
// function says xyxy.

struct BoxXyxy {
  double x0, y0, x1, y1;
};

inline BoxXyxy cxcywh_to_xyxy(double cx, double cy, double w, double h) {
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

inline double box_area(const BoxXyxy& b) {
  return std::max(0.0, b.x1 - b.x0) * std::max(0.0, b.y1 - b.y0);
}

inline double box_iou(const BoxXyxy& a, const BoxXyxy& b) {
  const double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  const double uni = box_area(a) + box_area(b) - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

// generalized IoU; well-defined (negative) for disjoint boxes
inline double box_giou(const BoxXyxy& a, const BoxXyxy& b) {
  const double ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
  const double uni = box_area(a) + box_area(b) - inter;
  const double hx0 = std::min(a.x0, b.x0), hy0 = std::min(a.y0, b.y0);
  const double hx1 = std::max(a.x1, b.x1), hy1 = std::max(a.y1, b.y1);
  const double hull = (hx1 - hx0) * (hy1 - hy0);
  const double iou = uni <= 0.0 ? 0.0 : inter / uni;
  return hull <= 0.0 ? iou : iou - (hull - uni) / hull;
}

// ---------------------------------------------------------------------------
// differentiable losses on matched pairs (boxes [M,4] cxcywh)

template <class T>
nc::Tensor<T> boxes_to_xyxy(nc::Tensor<T> boxes) {
  using nc::mul_scalar, nc::slice, nc::sub, nc::add;
  auto cx = slice(boxes, 1, 0, 1);
  auto cy = slice(boxes, 1, 1, 1);
  auto hw = mul_scalar(slice(boxes, 1, 2, 1), 0.5);
  auto hh = mul_scalar(slice(boxes, 1, 3, 1), 0.5);
  return nc::concat<T>({sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh)}, 1);
}

// mean 1 - GIoU over matched pairs; targets carry no gradient
template <class T>
nc::Tensor<T> giou_loss(nc::Tensor<T> pred_cxcywh, nc::Tensor<T> tgt_cxcywh) {
  using namespace nc;
  require(pred_cxcywh.shape() == tgt_cxcywh.shape() && pred_cxcywh.rank() == 2 &&
              pred_cxcywh.dim(1) == 4,
          "giou_loss: need matching [M,4] boxes");
  auto p = boxes_to_xyxy(pred_cxcywh);
  auto t = boxes_to_xyxy(tgt_cxcywh.detach());
  auto col = [&](Tensor<T> b, int64_t i) { return slice(b, 1, i, 1); };
  auto ix0 = maximum(col(p, 0), col(t, 0));
  auto iy0 = maximum(col(p, 1), col(t, 1));
  auto ix1 = minimum(col(p, 2), col(t, 2));
  auto iy1 = minimum(col(p, 3), col(t, 3));
  auto inter = mul(relu(sub(ix1, ix0)), relu(sub(iy1, iy0)));
  auto area = [&](Tensor<T> b) {
    return mul(relu(sub(col(b, 2), col(b, 0))), relu(sub(col(b, 3), col(b, 1))));
  };
  auto uni = add_scalar(sub(add(area(p), area(t)), inter), 1e-7);
  auto iou = div(inter, uni);
  auto hx0 = minimum(col(p, 0), col(t, 0));
  auto hy0 = minimum(col(p, 1), col(t, 1));
  auto hx1 = maximum(col(p, 2), col(t, 2));
  auto hy1 = maximum(col(p, 3), col(t, 3));
  auto hull = add_scalar(mul(sub(hx1, hx0), sub(hy1, hy0)), 1e-7);
  auto giou = sub(iou, div(sub(hull, uni), hull));
  return mean_all(sub(Tensor<T>::filled({pred_cxcywh.dim(0), 1}, T(1)), giou));
}

template <class T>
nc::Tensor<T> l1_box_loss(nc::Tensor<T> pred, nc::Tensor<T> tgt) {
  nc::require(pred.shape() == tgt.shape(), "l1_box_loss: shape mismatch");
  // mean over boxes of the summed per-coordinate absolute error
  return nc::mul_scalar(nc::mean_all(nc::abs(nc::sub(pred, tgt.detach()))), 4.0);
}

// differentiable dice loss on mask logits vs binary targets, mean over rows
template <class T>
nc::Tensor<T> dice_loss(nc::Tensor<T> mask_logits, nc::Tensor<T> targets) {
  using namespace nc;
  require(mask_logits.shape() == targets.shape(), "dice_loss: shape mismatch");
  require(mask_logits.rank() == 2, "dice_loss: need [M, pixels]");
  auto p = sigmoid(mask_logits);
  auto t = targets.detach();
  auto num = mul_scalar(sum_axis(mul(p, t), 1), 2.0);
  auto den = add_scalar(add(sum_axis(p, 1), sum_axis(t, 1)), 1.0);
  auto dice = div(add_scalar(num, 1.0), den);
  return mean_all(sub(Tensor<T>::filled({mask_logits.dim(0)}, T(1)), dice));
}

}  // namespace mtvl::model
