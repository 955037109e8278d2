#include "ldr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ldr/error.hpp"

namespace ldr {

ScalarGrad focal_loss(double p, int y, double alpha_f, double gamma) {
  const bool clamped = !(p >= kFocalEpsilon && p <= 1.0 - kFocalEpsilon);
  p = std::clamp(p, kFocalEpsilon, 1.0 - kFocalEpsilon);
  ScalarGrad out;
  if (y == 1) {
    const double q = 1.0 - p;
    out.value = -alpha_f * std::pow(q, gamma) * std::log(p);
    out.grad = alpha_f * (gamma * std::pow(q, gamma - 1.0) * std::log(p) - std::pow(q, gamma) / p);
  } else {
    const double q = 1.0 - p;
    out.value = -(1.0 - alpha_f) * std::pow(p, gamma) * std::log(q);
    out.grad = -(1.0 - alpha_f) * (gamma * std::pow(p, gamma - 1.0) * std::log(q) - std::pow(p, gamma) / q);
  }
  if (clamped) out.grad = 0.0;
  return out;
}

ScalarGrad focal_loss_logit(double logit, int y, double alpha_f, double gamma) {
  const double p = sigmoid(logit);
  ScalarGrad out = focal_loss(p, y, alpha_f, gamma);
  out.grad *= p * (1.0 - p);
  return out;
}

ScalarGrad smooth_l1(double x, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const double a = std::abs(x);
  if (a < beta) return {0.5 * x * x / beta, x / beta};
  return {a - 0.5 * beta, x > 0 ? 1.0 : -1.0};
}

BoxLoss giou_loss(const Box3D& pred, const Box3D& gt) {
  const GiouGradient g = giou_3d_with_gradient(pred, gt);
  BoxLoss out;
  out.value = 1.0 - g.value;
  for (int k = 0; k < 7; ++k) out.d_pred[k] = -g.d_pred[k];
  return out;
}

LossBreakdown LossBreakdown::combine(double rpn, double stage1, double lidar_aux, double pseudo_aux, double fused,
                                     const LossWeights& w) {
  LossBreakdown b{rpn, stage1, lidar_aux, pseudo_aux, fused, 0.0};
  b.total = b.recompute_total(w);
  return b;
}

double LossBreakdown::recompute_total(const LossWeights& w) const {
  return rpn + w.stage1 * stage1 + w.aux * (lidar_aux + pseudo_aux) + w.fused * fused;
}

std::vector<RoiTarget> assign_targets(std::span<const Box3D> anchors, std::span<const ObjectClass> anchor_classes,
                                      std::span<const Box3D> gts, std::span<const ObjectClass> gt_classes,
                                      double iou_threshold) {
  if (anchors.size() != anchor_classes.size() || gts.size() != gt_classes.size()) {
    throw ShapeError("assign_targets: boxes and classes differ in length");
  }
  std::vector<RoiTarget> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    out[i].anchor = anchors[i];
    double best = 0.0;
    int best_j = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (gt_classes[j] != anchor_classes[i]) continue;
      const double iou = iou_3d(anchors[i], gts[j]);
      if (iou > best) {
        best = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best >= iou_threshold) {
      out[i].positive = true;
      out[i].gt = gts[best_j];
      out[i].residual = encode_box(gts[best_j], anchors[i]);
    }
  }
  return out;
}

HeadLoss head_loss(std::span<const HeadOutput> outputs, std::span<const RoiTarget> targets, bool with_giou,
                   double normalizer, const HeadLossConfig& cfg) {
  if (outputs.size() != targets.size()) throw ShapeError("head_loss: outputs and targets differ in length");
  const double norm = std::max(1.0, normalizer);
  HeadLoss out;
  out.d_logit.assign(outputs.size(), 0.0);
  out.d_residual.assign(outputs.size(), BoxResidual{});
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const RoiTarget& t = targets[i];
    const ScalarGrad f = focal_loss_logit(outputs[i].logit, t.positive ? 1 : 0, cfg.focal_alpha, cfg.focal_gamma);
    out.classification += f.value / norm;
    out.d_logit[i] = f.grad / norm;
    if (!t.positive) continue;
    for (int k = 0; k < 7; ++k) {
      const ScalarGrad s = smooth_l1(outputs[i].residual[k] - t.residual[k], cfg.smooth_l1_beta);
      out.regression += s.value / norm;
      out.d_residual[i][k] += s.grad / norm;
    }
    if (with_giou) {
      const Box3D pred = decode_box(outputs[i].residual, t.anchor);
      const BoxLoss g = giou_loss(pred, t.gt);
      const auto jac = decode_box_jacobian(outputs[i].residual, t.anchor);
      out.giou += g.value / norm;
      for (int k = 0; k < 7; ++k) out.d_residual[i][k] += g.d_pred[k] * jac[k] / norm;
    }
  }
  out.value = out.classification + out.regression + out.giou;
  return out;
}

namespace {

double count_positive(std::span<const RoiTarget> targets) {
  return static_cast<double>(std::count_if(targets.begin(), targets.end(), [](const RoiTarget& t) { return t.positive; }));
}

void scale(HeadLoss& h, double s) {
  for (auto& d : h.d_logit) d *= s;
  for (auto& r : h.d_residual) {
    for (auto& v : r) v *= s;
  }
}

}  // namespace

TotalLoss total_loss(const LossInputs& in, const LossWeights& w, const HeadLossConfig& cfg) {
  TotalLoss out;
  const double pos1 = count_positive(in.stage1_targets);
  const double pos2 = count_positive(in.stage2_targets);
  out.stage1 = head_loss(in.stage1, in.stage1_targets, false, pos1, cfg);
  out.lidar_aux = head_loss(in.lidar_aux, in.stage2_targets, false, pos2, cfg);
  out.pseudo_aux = head_loss(in.pseudo_aux, in.stage2_targets, false, pos2, cfg);
  out.fused = head_loss(in.fused, in.stage2_targets, true, pos2, cfg);
  out.breakdown = LossBreakdown::combine(0.0, out.stage1.value, out.lidar_aux.value, out.pseudo_aux.value,
                                         out.fused.value, w);
  scale(out.stage1, w.stage1);
  scale(out.lidar_aux, w.aux);
  scale(out.pseudo_aux, w.aux);
  scale(out.fused, w.fused);
  return out;
}

void sgd_step(std::span<const ParamTensor> params, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sgd_step: learning rate must be finite and >= 0");
  for (const auto& p : params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

GradCheckReport grad_check(const std::function<double()>& f, std::span<const ParamTensor> params,
                           const GradCheckOptions& opt) {
  if (!(opt.h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  GradCheckReport report;
  Rng rng(opt.seed);
  const double base = opt.kink_tolerance > 0.0 ? f() : 0.0;
  for (const auto& p : params) {
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_entries_per_tensor > 0 && idx.size() > opt.max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.h;
      const double up = f();
      p.value[i] = saved - opt.h;
      const double down = f();
      p.value[i] = saved;
      double numeric = (up - down) / (2.0 * opt.h);
      const double analytic = p.grad[i];
      if (opt.kink_tolerance > 0.0) {
        const double bend = std::abs((up - base) - (base - down)) / opt.h;
        if (bend > opt.kink_tolerance * std::max(1.0, std::abs(numeric))) {
          // A kink inside [x-h, x+h]; a narrower stencil usually clears it.
          const double hk = opt.h * 1e-2;
          p.value[i] = saved + hk;
          const double up_k = f();
          p.value[i] = saved - hk;
          const double down_k = f();
          p.value[i] = saved;
          numeric = (up_k - down_k) / (2.0 * hk);
          ++report.kinks;
        }
      }
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.floor});
      double rel = std::abs(numeric - analytic) / denom;
      if (std::isnan(rel)) rel = INFINITY;
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = p.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace ldr
