#include "evcn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evcn {

bool LossBreakdown::finite() const {
  for (double v : field_values())
    if (!std::isfinite(v)) return false;
  return true;
}

const std::vector<const char*>& LossBreakdown::field_names() {
  static const std::vector<const char*> names = {
      "l_theta", "l_kl", "l_focal_neg", "l_un_cls", "l_nll_w", "l_reg_w",
      "l_un_w",  "l_nll_h", "l_reg_h",  "l_un_h",   "l_off",   "total"};
  return names;
}

std::vector<double> LossBreakdown::field_values() const {
  return {l_theta, l_kl, l_focal_neg, l_un_cls, l_nll_w, l_reg_w,
          l_un_w,  l_nll_h, l_reg_h,  l_un_h,   l_off,   total};
}

std::pair<Tensor, Tensor> evidential_class_terms(const DirichletGrids& g, const Tensor& y_obj) {
  if (y_obj.shape() != g.alpha1.shape())
    throw ShapeError("evidential_class_terms: target shape " + shape_str(y_obj.shape()) +
                     " does not match state " + shape_str(g.alpha1.shape()));
  for (double v : y_obj.data())
    if (v != 0.0 && v != 1.0)
      throw ValidationError("evidential_class_terms: y must be one-hot (entries 0 or 1), got " + std::to_string(v));

  // y1 = 1 - y_obj, y2 = y_obj
  Tensor y2 = y_obj;
  Tensor y1 = make_tensor(y_obj.shape(), [&] {
    std::vector<double> d = y_obj.data();
    for (double& v : d) v = 1.0 - v;
    return d;
  }(), false);

  Tensor psi_s = digamma(g.s);
  Tensor l_theta = y1 * (psi_s - digamma(g.alpha1)) + y2 * (psi_s - digamma(g.alpha2));

  // alpha~_k = y_k + (1 - y_k) * alpha_k ; KL( Dir(alpha~) || Dir(1) )
  Tensor at1 = y1 + y2 * g.alpha1;  // y1 + (1-y1)*a1 with 1-y1 == y2
  Tensor at2 = y2 + y1 * g.alpha2;
  Tensor st = at1 + at2;
  Tensor psi_st = digamma(st);
  Tensor l_kl = lgamma(st) - lgamma(at1) - lgamma(at2) +
                (at1 - 1.0) * (digamma(at1) - psi_st) +
                (at2 - 1.0) * (digamma(at2) - psi_st);
  return {l_theta, l_kl};
}

std::array<double, 2> class_balanced_weights(long n1, long n2, double beta_cb) {
  if (n1 < 0 || n2 < 0) throw ValidationError("class_balanced_weights: negative count");
  if (n1 == 0 && n2 == 0) throw ValidationError("class_balanced_weights: both class counts are zero");
  if (!(beta_cb > 0.0 && beta_cb < 1.0))
    throw ValidationError("class_balanced_weights: beta must be in (0,1), got " + std::to_string(beta_cb));
  // a zero-count class makes the effective number diverge; the grid then
  // contributes no weighted loss pixels at all
  if (n1 == 0 || n2 == 0) return {0.0, 0.0};
  auto effective = [&](long n) {
    return (1.0 - beta_cb) / (1.0 - std::pow(beta_cb, static_cast<double>(n)));
  };
  double e1 = effective(n1), e2 = effective(n2);
  double denom = e1 + e2;
  return {2.0 * e1 / denom, 2.0 * e2 / denom};
}

Tensor focal_negative(const Tensor& heatmap, const Tensor& p_obj, double zeta, double eta) {
  if (heatmap.shape() != p_obj.shape())
    throw ShapeError("focal_negative: heatmap shape " + shape_str(heatmap.shape()) +
                     " does not match prediction " + shape_str(p_obj.shape()));
  // constant factor mask * (1-Y)^eta, zero where Y == 1
  std::vector<double> wy(heatmap.numel());
  const auto& y = heatmap.data();
  for (size_t i = 0; i < wy.size(); ++i) {
    if (y[i] < 0.0 || y[i] > 1.0)
      throw ValidationError("focal_negative: heatmap value outside [0,1]: " + std::to_string(y[i]));
    wy[i] = (y[i] >= 1.0) ? 0.0 : std::pow(1.0 - y[i], eta);
  }
  Tensor wy_t = make_tensor(heatmap.shape(), std::move(wy), false);
  Tensor p = clamp(p_obj, 1e-7, 1.0 - 1e-7);
  return neg(wy_t * pow(p, zeta) * log(1.0 - p));
}

Tensor topk_uncertainty_mse(const Tensor& pred, const Tensor& target,
                            const std::vector<double>& uncertainty, size_t k,
                            const std::vector<size_t>* allowed) {
  if (pred.numel() == 0 || target.numel() == 0) throw ValidationError("topk_uncertainty_mse: empty grids");
  if (pred.shape() != target.shape() || uncertainty.size() != pred.numel())
    throw ShapeError("topk_uncertainty_mse: incongruent grids, pred " + shape_str(pred.shape()) +
                     " target " + shape_str(target.shape()) + " uncertainty length " +
                     std::to_string(uncertainty.size()));
  if (k == 0) throw ValidationError("topk_uncertainty_mse: k must be >= 1");

  std::vector<size_t> idx;
  if (allowed) {
    idx = *allowed;
    if (idx.empty()) throw ValidationError("topk_uncertainty_mse: empty candidate set");
  } else {
    idx.resize(pred.numel());
    std::iota(idx.begin(), idx.end(), size_t{0});
  }
  k = std::min(k, idx.size());
  auto more_uncertain = [&](size_t a, size_t b) {
    if (uncertainty[a] != uncertainty[b]) return uncertainty[a] > uncertainty[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), more_uncertain);
  idx.resize(k);
  // selection is frozen; only the gathered predictions carry gradient
  return mean(abs(gather(pred, idx) - gather(target, idx)));
}

Tensor regression_weights(const Tensor& y_dim, int n_centered, int n_obj_max, double kappa2) {
  if (n_centered < 1)
    throw ValidationError("regression_weights: n_centered must be >= 1 (zero-object images skip regression)");
  if (n_obj_max < 1) throw ValidationError("regression_weights: n_obj_max must be >= 1");
  int n = std::min(n_centered, 2 * n_obj_max - 1);
  double kappa1 = std::log(static_cast<double>(2 * n_obj_max - n) / static_cast<double>(n));
  std::vector<double> w(y_dim.numel());
  const auto& y = y_dim.data();
  for (size_t i = 0; i < w.size(); ++i) w[i] = y[i] > 0.0 ? kappa1 : kappa2;
  return make_tensor(y_dim.shape(), std::move(w), false);
}

std::pair<Tensor, Tensor> nig_nll_and_reg(const NigGrids& g, const Tensor& y) {
  if (y.shape() != g.gamma.shape())
    throw ShapeError("nig_nll_and_reg: target shape " + shape_str(y.shape()) + " does not match state " + shape_str(g.gamma.shape()));
  Tensor resid = y - g.gamma;
  Tensor omega = 2.0 * (g.beta * (1.0 + g.v));
  Tensor nll = 0.5 * (std::log(M_PI) - log(g.v)) - g.alpha * log(omega) +
               (g.alpha + 0.5) * log(resid * resid * g.v + omega) +
               lgamma(g.alpha) - lgamma(g.alpha + 0.5);
  Tensor reg = abs(resid) * (2.0 * g.v + g.alpha);
  return {nll, reg};
}

namespace {

// Constant (N,H,W) grid with a per-image value chosen by a binary mask grid.
Tensor per_image_masked_grid(const BatchTargets& t, const Tensor& mask,
                             const std::vector<std::array<double, 2>>& per_image) {
  std::vector<double> w(mask.numel());
  const auto& m = mask.data();
  const size_t hw = t.h * t.w;
  for (size_t n = 0; n < t.batch; ++n)
    for (size_t i = 0; i < hw; ++i)
      w[n * hw + i] = m[n * hw + i] > 0.0 ? per_image[n][1] : per_image[n][0];
  return make_tensor(mask.shape(), std::move(w), false);
}

Tensor extract_class_logit(const HeadOutputs& heads, const BatchTargets& t, size_t cls, size_t which) {
  Tensor ch = slice_channels(heads.obj_logits, 2 * cls + which, 2 * cls + which + 1);
  return reshape(ch, {t.batch, t.h, t.w});
}

Tensor extract_wh_channel(const HeadOutputs& heads, const BatchTargets& t, size_t ch) {
  return reshape(slice_channels(heads.wh_raw, ch, ch + 1), {t.batch, t.h, t.w});
}

}  // namespace

LossBreakdown final_loss(const HeadOutputs& heads, const BatchTargets& targets,
                         const ClassificationLossConfig& cls_cfg,
                         const RegressionLossConfig& reg_cfg, double lambda_cls) {
  const size_t n = targets.batch, hw = targets.h * targets.w;
  if (heads.obj_logits.shape() != Shape{n, 2 * targets.num_classes, targets.h, targets.w})
    throw ShapeError("final_loss: obj_logits shape " + shape_str(heads.obj_logits.shape()) +
                     " does not match targets grid " + std::to_string(targets.h) + "x" + std::to_string(targets.w));
  if (targets.heatmap.size() != targets.num_classes || targets.y_obj.size() != targets.num_classes)
    throw ValidationError("final_loss: target class count mismatch");

  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor l_theta_acc = Tensor::scalar(0.0);
  Tensor l_kl_acc = Tensor::scalar(0.0);
  Tensor l_focal_acc = Tensor::scalar(0.0);
  Tensor l_un_cls_acc = Tensor::scalar(0.0);

  const size_t k_cls = std::max<size_t>(1, (size_t)std::llround(cls_cfg.n_cls_fraction * (double)(hw * n)));
  for (size_t c = 0; c < targets.num_classes; ++c) {
    DirichletGrids g = dirichlet_from_logits(extract_class_logit(heads, targets, c, 0),
                                             extract_class_logit(heads, targets, c, 1));
    auto [l_theta, l_kl] = evidential_class_terms(g, targets.y_obj[c]);

    std::vector<std::array<double, 2>> w_img(n, {1.0, 1.0});
    if (cls_cfg.use_class_balance) {
      const auto& yo = targets.y_obj[c].data();
      for (size_t i = 0; i < n; ++i) {
        long n2 = 0;
        for (size_t p = 0; p < hw; ++p) n2 += yo[i * hw + p] > 0.0 ? 1 : 0;
        w_img[i] = class_balanced_weights((long)hw - n2, n2, cls_cfg.beta_cb);
      }
    }
    Tensor w_cls = per_image_masked_grid(targets, targets.y_obj[c], w_img);

    l_theta_acc = l_theta_acc + sum(l_theta * w_cls) * inv_n;
    l_kl_acc = l_kl_acc + sum(l_kl * w_cls) * inv_n;
    l_focal_acc = l_focal_acc + sum(focal_negative(targets.heatmap[c], g.p2, cls_cfg.zeta, cls_cfg.eta)) * inv_n;
    l_un_cls_acc = l_un_cls_acc + topk_uncertainty_mse(g.p2, targets.heatmap[c], g.u.data(), k_cls);
  }

  // regression: images with no objects contribute nothing
  std::vector<size_t> reg_candidates;
  size_t total_objects = 0;
  for (size_t i = 0; i < n; ++i) total_objects += targets.obj_pixels[i].size();
  if (total_objects > 0) {
    for (size_t i = 0; i < n; ++i) {
      if (targets.obj_pixels[i].empty()) continue;
      for (size_t p = 0; p < hw; ++p) reg_candidates.push_back(i * hw + p);
    }
  }

  auto regression_terms = [&](size_t ch0, const Tensor& y_dim) {
    NigGrids g = nig_from_raw(extract_wh_channel(heads, targets, ch0),
                              extract_wh_channel(heads, targets, ch0 + 1),
                              extract_wh_channel(heads, targets, ch0 + 2),
                              extract_wh_channel(heads, targets, ch0 + 3));
    struct Terms { Tensor nll, reg, un; } t{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0)};
    if (total_objects == 0) return t;
    auto [nll, reg] = nig_nll_and_reg(g, y_dim);
    // stitch the per-image weight rows into one batch grid
    std::vector<double> w(n * hw, 0.0);
    for (size_t i = 0; i < n; ++i) {
      size_t n_centered = targets.obj_pixels[i].size();
      if (n_centered == 0) continue;  // skipped image, weight row stays 0
      int nc = std::min<int>((int)n_centered, 2 * reg_cfg.n_obj_max - 1);
      double kappa1 = std::log((double)(2 * reg_cfg.n_obj_max - nc) / (double)nc);
      const auto& y = y_dim.data();
      for (size_t p = 0; p < hw; ++p)
        w[i * hw + p] = y[i * hw + p] > 0.0 ? kappa1 : reg_cfg.kappa2;
    }
    Tensor w_reg = make_tensor(y_dim.shape(), std::move(w), false);
    t.nll = sum(nll * w_reg) * inv_n;
    t.reg = sum(reg * w_reg) * inv_n;
    t.un = topk_uncertainty_mse(g.gamma, y_dim, g.u.data(), (size_t)std::max(1, reg_cfg.n_w), &reg_candidates);
    return t;
  };

  auto w_terms = regression_terms(0, targets.w_target);
  auto h_terms = regression_terms(4, targets.h_target);

  // offset: plain L1 at object pixels, normalized by object count
  Tensor l_off_acc = Tensor::scalar(0.0);
  if (total_objects > 0) {
    std::vector<size_t> flat;
    for (size_t i = 0; i < n; ++i)
      for (size_t p : targets.obj_pixels[i]) flat.push_back(i * hw + p);
    Tensor pred_dx = reshape(slice_channels(heads.off_raw, 0, 1), {n, targets.h, targets.w});
    Tensor pred_dy = reshape(slice_channels(heads.off_raw, 1, 2), {n, targets.h, targets.w});
    Tensor diff = sum(abs(gather(pred_dx, flat) - gather(targets.off_x, flat))) +
                  sum(abs(gather(pred_dy, flat) - gather(targets.off_y, flat)));
    l_off_acc = diff * (1.0 / static_cast<double>(total_objects));
  }

  Tensor cls_total = l_theta_acc + lambda_cls * l_kl_acc + l_focal_acc + cls_cfg.lambda_un_cls * l_un_cls_acc;
  Tensor w_total = w_terms.nll + reg_cfg.lambda_w * w_terms.reg + reg_cfg.lambda_un_reg * w_terms.un;
  Tensor h_total = h_terms.nll + reg_cfg.lambda_w * h_terms.reg + reg_cfg.lambda_un_reg * h_terms.un;
  Tensor total = kLambdaCls * cls_total + kLambdaW * w_total + kLambdaH * h_total + kLambdaOff * l_off_acc;

  LossBreakdown b;
  b.l_theta = l_theta_acc.item();
  b.l_kl = l_kl_acc.item();
  b.l_focal_neg = l_focal_acc.item();
  b.l_un_cls = l_un_cls_acc.item();
  b.l_nll_w = w_terms.nll.item();
  b.l_reg_w = w_terms.reg.item();
  b.l_un_w = w_terms.un.item();
  b.l_nll_h = h_terms.nll.item();
  b.l_reg_h = h_terms.reg.item();
  b.l_un_h = h_terms.un.item();
  b.l_off = l_off_acc.item();
  b.total = total.item();
  b.total_tensor = total;
  return b;
}

}  // namespace evcn
