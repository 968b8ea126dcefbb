#include "evcn/heads.hpp"

#include <cmath>

namespace evcn {

namespace {

void require_finite(const char* op, const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

DirichletGrids dirichlet_from_logits(const Tensor& logit1, const Tensor& logit2) {
  if (logit1.shape() != logit2.shape())
    throw ShapeError("dirichlet_from_logits: logit shape mismatch " + shape_str(logit1.shape()) + " vs " + shape_str(logit2.shape()));
  require_finite("dirichlet_from_logits", logit1);
  require_finite("dirichlet_from_logits", logit2);

  DirichletGrids g;
  g.alpha1 = softplus(logit1) + 1.0;
  g.alpha2 = softplus(logit2) + 1.0;
  g.s = g.alpha1 + g.alpha2;
  g.p1 = g.alpha1 / g.s;
  g.p2 = g.alpha2 / g.s;
  g.u = static_cast<double>(DirichletGrids::kOutcomes) * pow(g.s, -1.0);
  return g;
}

NigGrids nig_from_raw(const Tensor& raw_gamma, const Tensor& raw_v, const Tensor& raw_alpha,
                      const Tensor& raw_beta) {
  if (raw_gamma.shape() != raw_v.shape() || raw_gamma.shape() != raw_alpha.shape() ||
      raw_gamma.shape() != raw_beta.shape())
    throw ShapeError("nig_from_raw: raw channel shape mismatch, gamma " + shape_str(raw_gamma.shape()));
  require_finite("nig_from_raw", raw_gamma);
  require_finite("nig_from_raw", raw_v);
  require_finite("nig_from_raw", raw_alpha);
  require_finite("nig_from_raw", raw_beta);

  NigGrids g;
  g.gamma = raw_gamma + 0.0;  // y_hat is gamma itself
  g.v = clamp_min(softplus(raw_v), kNigFloor);
  g.alpha = clamp_min(softplus(raw_alpha) + 1.0, 1.0 + kNigFloor);
  g.beta = clamp_min(softplus(raw_beta), kNigFloor);
  g.u = sqrt(g.beta / (g.v * (g.alpha - 1.0)));
  return g;
}

}  // namespace evcn
