#include "evcn/gradcheck.hpp"

#include <algorithm>

#include "evcn/heads.hpp"
#include "evcn/losses.hpp"
#include "evcn/rng.hpp"
#include "evcn/tensor.hpp"

namespace evcn {

namespace {

constexpr size_t kGrid = 8;  // pixels per random point

std::vector<size_t> range_idx(size_t lo, size_t n) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = lo + i;
  return idx;
}

// one random one-hot grid: y2 = 1 with probability 0.3
std::vector<double> random_y2(Rng& rng) {
  std::vector<double> y(kGrid);
  for (double& v : y) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  return y;
}

double check_class_term(int points, uint64_t seed, bool kl) {
  Rng rng(Rng::mix(seed, kl ? 2 : 1));
  double worst = 0;
  for (int pt = 0; pt < points; ++pt) {
    std::vector<double> y2 = random_y2(rng);
    std::vector<double> y1(kGrid);
    for (size_t i = 0; i < kGrid; ++i) y1[i] = 1.0 - y2[i];
    Tensor y_obj = make_tensor({kGrid}, y2, false);
    auto f = [&](const Tensor& x) {
      Tensor l1 = gather(x, range_idx(0, kGrid));
      Tensor l2 = gather(x, range_idx(kGrid, kGrid));
      DirichletGrids g = dirichlet_from_logits(l1, l2);
      auto [theta, kl_grid] = evidential_class_terms(g, y_obj);
      return sum(kl ? kl_grid : theta);
    };
    std::vector<double> logits(2 * kGrid);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    worst = std::max(worst, finite_diff_check(f, make_tensor({2 * kGrid}, std::move(logits), true)));
  }
  return worst;
}

double check_focal(int points, uint64_t seed) {
  Rng rng(Rng::mix(seed, 3));
  double worst = 0;
  for (int pt = 0; pt < points; ++pt) {
    std::vector<double> hm(kGrid);
    for (double& v : hm) v = rng.uniform() < 0.2 ? 1.0 : rng.uniform(0.0, 0.95);
    Tensor heatmap = make_tensor({kGrid}, std::move(hm), false);
    auto f = [&](const Tensor& x) {
      Tensor l1 = gather(x, range_idx(0, kGrid));
      Tensor l2 = gather(x, range_idx(kGrid, kGrid));
      DirichletGrids g = dirichlet_from_logits(l1, l2);
      return sum(focal_negative(heatmap, g.p2, 2.0, 4.0));
    };
    std::vector<double> logits(2 * kGrid);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    worst = std::max(worst, finite_diff_check(f, make_tensor({2 * kGrid}, std::move(logits), true)));
  }
  return worst;
}

double check_nig(int points, uint64_t seed, bool reg) {
  Rng rng(Rng::mix(seed, reg ? 5 : 4));
  double worst = 0;
  for (int pt = 0; pt < points; ++pt) {
    std::vector<double> yv(kGrid);
    for (double& v : yv) v = rng.uniform(1.0, 8.0);
    Tensor y = make_tensor({kGrid}, yv, false);
    auto f = [&](const Tensor& x) {
      // raw order: gamma, v, alpha, beta
      NigGrids g = nig_from_raw(gather(x, range_idx(0, kGrid)), gather(x, range_idx(kGrid, kGrid)),
                                gather(x, range_idx(2 * kGrid, kGrid)), gather(x, range_idx(3 * kGrid, kGrid)));
      auto [nll, reg_grid] = nig_nll_and_reg(g, y);
      return sum(reg ? reg_grid : nll);
    };
    std::vector<double> raw(4 * kGrid);
    for (size_t i = 0; i < kGrid; ++i) {
      raw[i] = rng.uniform(-4.0, 12.0);                // gamma, keeps |y-gamma| > 0 a.s.
      raw[kGrid + i] = rng.uniform(0.5, 3.0);          // v, away from the 1e-4 clamp
      raw[2 * kGrid + i] = rng.uniform(0.5, 3.0);      // alpha
      raw[3 * kGrid + i] = rng.uniform(0.5, 3.0);      // beta
    }
    worst = std::max(worst, finite_diff_check(f, make_tensor({4 * kGrid}, std::move(raw), true)));
  }
  return worst;
}

double check_topk(int points, uint64_t seed) {
  Rng rng(Rng::mix(seed, 6));
  double worst = 0;
  for (int pt = 0; pt < points; ++pt) {
    std::vector<double> tv(kGrid), uv(kGrid);
    for (double& v : tv) v = rng.uniform(2.0, 6.0);
    for (double& v : uv) v = rng.uniform(0.0, 1.0);
    Tensor target = make_tensor({kGrid}, tv, false);
    const size_t k = 1 + (size_t)(rng.next_u64() % kGrid);
    auto f = [&](const Tensor& x) { return topk_uncertainty_mse(x, target, uv, k); };
    std::vector<double> pred(kGrid);
    for (double& v : pred) v = rng.uniform(-1.0, 1.0);  // far from targets: |pred-target| smooth
    worst = std::max(worst, finite_diff_check(f, make_tensor({kGrid}, std::move(pred), true)));
  }
  return worst;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(int points, uint64_t seed) {
  return {
      {"l_theta", check_class_term(points, seed, false)},
      {"l_kl", check_class_term(points, seed, true)},
      {"focal_negative", check_focal(points, seed)},
      {"nig_nll", check_nig(points, seed, false)},
      {"nig_reg", check_nig(points, seed, true)},
      {"topk_uncertainty", check_topk(points, seed)},
  };
}

}  // namespace evcn
