#pragma once

#include <array>
#include <utility>
#include <vector>

#include "evcn/heads.hpp"
#include "evcn/tensor.hpp"

namespace evcn {

struct ClassificationLossConfig {
  double lambda_un_cls = 0.1;  // weight of the top-K uncertainty regularizer
  double n_cls_fraction = 0.4; // K = round(fraction * H * W * batch), per class
  double zeta = 2.0;           // focal exponent on the predicted probability
  double eta = 4.0;            // focal exponent on (1 - heatmap)
  double beta_cb = 0.99;       // class-balance hyperparameter
  bool use_class_balance = true;
};

struct RegressionLossConfig {
  double lambda_w = 1.0;       // evidential regularizer coefficient
  double lambda_un_reg = 0.1;  // weight of the top-K uncertainty regularizer
  int n_w = 55;                // most-uncertain width (resp. height) picks per batch
  int n_obj_max = 50;          // max detectable objects
  double kappa2 = 1e-3;        // background pixel weight
};

// Group coefficients of the final loss.
constexpr double kLambdaCls = 1.0;
constexpr double kLambdaW = 0.27;
constexpr double kLambdaH = 0.27;
constexpr double kLambdaOff = 1.0;

// Every term of the final loss, itemized. total recomposes as
//   kLambdaCls * (l_theta + lambda_cls*l_kl + l_focal_neg + lambda_un_cls*l_un_cls)
// + kLambdaW   * (l_nll_w + lambda_w*l_reg_w + lambda_un_reg*l_un_w)
// + kLambdaH   * (l_nll_h + lambda_w*l_reg_h + lambda_un_reg*l_un_h)
// + kLambdaOff * l_off
struct LossBreakdown {
  double l_theta = 0, l_kl = 0, l_focal_neg = 0, l_un_cls = 0;
  double l_nll_w = 0, l_reg_w = 0, l_un_w = 0;
  double l_nll_h = 0, l_reg_h = 0, l_un_h = 0;
  double l_off = 0;
  double total = 0;
  Tensor total_tensor;  // differentiable total; defined only when built on a tape

  bool finite() const;
  static const std::vector<const char*>& field_names();
  std::vector<double> field_values() const;
};

// Ground-truth side of one training batch, everything at downsampled
// resolution. Grids are constant (requires_grad false) tensors of shape
// (batch, h, w); obj_pixels holds per-image flat indices into h*w.
struct BatchTargets {
  size_t batch = 0, h = 0, w = 0, num_classes = 0;
  std::vector<Tensor> heatmap;  // per class, Gaussian targets in [0,1]
  std::vector<Tensor> y_obj;    // per class, 1 exactly where heatmap == 1
  Tensor w_target, h_target;    // ds units at object pixels, 0 elsewhere
  Tensor off_x, off_y;          // discretization offsets in [0,1)
  std::vector<std::vector<size_t>> obj_pixels;
};

// Raw head outputs for one batch (model forward or synthetic, shapes NCHW).
struct HeadOutputs {
  Tensor obj_logits;  // (N, 2*num_classes, H, W), per class [L1, L2]
  Tensor wh_raw;      // (N, 8, H, W): w gamma,v,alpha,beta then h gamma,v,alpha,beta
  Tensor off_raw;     // (N, 2, H, W): dx, dy
};

// Digamma and KL terms of the evidential classification loss.
// y_obj entries must be exactly 0 or 1; L_KL is evaluated on
// alpha~ = y + (1-y) * alpha.
std::pair<Tensor, Tensor> evidential_class_terms(const DirichletGrids& g, const Tensor& y_obj);

// Effective-number class-balance weights, normalized so W1 + W2 = 2.
// A zero count contributes e_k = 0 (its pixels do not exist).
std::array<double, 2> class_balanced_weights(long n1, long n2, double beta_cb);

// One-sided focal loss on non-center pixels; zero where heatmap == 1.
// p_obj is the predicted object-presence probability.
Tensor focal_negative(const Tensor& heatmap, const Tensor& p_obj, double zeta, double eta);

// Mean absolute deviation over the k entries of largest uncertainty.
// Selection is frozen (computed from plain values, ties broken by ascending
// flat index); k larger than the candidate set uses all of it. allowed, when
// given, restricts the candidate flat indices.
Tensor topk_uncertainty_mse(const Tensor& pred, const Tensor& target,
                            const std::vector<double>& uncertainty, size_t k,
                            const std::vector<size_t>* allowed = nullptr);

// kappa1 where y_dim > 0, kappa2 elsewhere, as a constant grid.
// n_centered is clamped to [1, 2*n_obj_max - 1] so the log stays defined.
Tensor regression_weights(const Tensor& y_dim, int n_centered, int n_obj_max, double kappa2);

// NLL and non-KL regularizer grids of the evidential regression loss.
std::pair<Tensor, Tensor> nig_nll_and_reg(const NigGrids& g, const Tensor& y);

// The full training loss for one batch. lambda_cls comes from the annealing
// schedule. All summed terms are batch means of per-image sums.
LossBreakdown final_loss(const HeadOutputs& heads, const BatchTargets& targets,
                         const ClassificationLossConfig& cls_cfg,
                         const RegressionLossConfig& reg_cfg, double lambda_cls);

}  // namespace evcn
