#pragma once

#include "evcn/tensor.hpp"

namespace evcn {

// Per-pixel binary Dirichlet state for objectness; every field is a grid of
// the same shape as the input logits. alpha_k = softplus(L_k) + 1, so
// alpha_k >= 1, p1 + p2 = 1 and U = C / S lies in (0, 1].
struct DirichletGrids {
  Tensor alpha1, alpha2;  // evidence + 1
  Tensor s;               // alpha1 + alpha2
  Tensor p1, p2;          // p1: no center, p2: object centered
  Tensor u;               // C / S
  static constexpr int kOutcomes = 2;
};

DirichletGrids dirichlet_from_logits(const Tensor& logit1, const Tensor& logit2);

// Per-pixel Normal-Inverse-Gamma state for one regressed dimension.
// v = max(softplus(r_v), 1e-4), alpha = max(softplus(r_a) + 1, 1 + 1e-4),
// beta = max(softplus(r_b), 1e-4); the clamps keep U finite and real.
struct NigGrids {
  Tensor gamma;  // predicted dimension, y_hat == gamma
  Tensor v, alpha, beta;
  Tensor u;  // sqrt(beta / (v * (alpha - 1)))
};

constexpr double kNigFloor = 1e-4;

NigGrids nig_from_raw(const Tensor& raw_gamma, const Tensor& raw_v, const Tensor& raw_alpha,
                      const Tensor& raw_beta);

}  // namespace evcn
