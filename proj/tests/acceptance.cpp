// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. The desk-scale
// training criterion runs the full 400-image, 40-epoch reference recipe and
// dominates the runtime.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <vector>

#include "evcn/data.hpp"
#include "evcn/gradcheck.hpp"
#include "evcn/heads.hpp"
#include "evcn/losses.hpp"
#include "evcn/metrics.hpp"
#include "evcn/model.hpp"
#include "evcn/tensor.hpp"
#include "evcn/trainer.hpp"

using namespace evcn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: gradient suite -------------------------------------------

void criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  auto results = run_gradient_suite(100, 1);
  double elapsed = seconds_since(t0);
  double worst = 0;
  for (const auto& r : results) worst = std::max(worst, r.max_err);
  std::ostringstream os;
  os << "gradient suite max relative error " << worst << " (tol 1e-3), " << elapsed << " s (limit 60)";
  report(1, worst <= 1e-3 && elapsed < 60.0, os.str());
}

// ---- criterion 2: closed forms ---------------------------------------------

DirichletGrids dirichlet_grids(double a1, double a2) {
  DirichletGrids g;
  g.alpha1 = Tensor::full({1}, a1);
  g.alpha2 = Tensor::full({1}, a2);
  g.s = Tensor::full({1}, a1 + a2);
  g.p1 = Tensor::full({1}, a1 / (a1 + a2));
  g.p2 = Tensor::full({1}, a2 / (a1 + a2));
  g.u = Tensor::full({1}, 2.0 / (a1 + a2));
  return g;
}

void criterion2() {
  bool ok = true;
  std::ostringstream os;

  auto w = class_balanced_weights(30000, 20, 0.99);
  ok = ok && std::fabs(w[0] + w[1] - 2.0) <= 1e-9;
  auto w2 = class_balanced_weights(123, 45678, 0.99);
  ok = ok && std::fabs(w2[0] + w2[1] - 2.0) <= 1e-9;

  {
    DirichletGrids g = dirichlet_grids(1.0, 5.0);  // alpha~ = [1,1] under y=[0,1]
    auto [theta, kl] = evidential_class_terms(g, Tensor::full({1}, 1.0));
    ok = ok && std::fabs(kl.data()[0]) <= 1e-9;
  }
  {
    Tensor y = Tensor::full({1}, 1.0);
    Tensor wgt = regression_weights(y, 50, 50, 1e-3);
    ok = ok && wgt.data()[0] == 0.0;  // ln(50/50), exact
  }
  {
    DirichletGrids g = dirichlet_grids(1.0, 100.0);
    auto [theta, kl] = evidential_class_terms(g, Tensor::full({1}, 1.0));
    ok = ok && std::fabs(theta.data()[0] - 0.01) <= 1e-9;
  }
  {
    NigGrids g;
    g.gamma = Tensor::zeros({1});
    g.v = Tensor::full({1}, 1.0);
    g.alpha = Tensor::full({1}, 1.0);
    g.beta = Tensor::full({1}, 1.0);
    g.u = Tensor::full({1}, 1.0);
    auto [nll, reg] = nig_nll_and_reg(g, Tensor::zeros({1}));
    ok = ok && std::fabs(nll.data()[0] - std::log(4.0)) <= 1e-6;
  }
  report(2, ok, "closed-form checks (weight normalization, KL zero, kappa1, digamma loss, NIG NLL)");
}

// ---- criterion 3: loop oracle ----------------------------------------------
// Straight-line reimplementation of every loss formula. digamma comes from a
// Richardson-extrapolated stencil of std::lgamma, independent of the library.

double psi_oracle(double x) {
  auto five_point = [&](double h) {
    return (-std::lgamma(x + 2 * h) + 8 * std::lgamma(x + h) - 8 * std::lgamma(x - h) +
            std::lgamma(x - 2 * h)) /
           (12 * h);
  };
  const double h = 1e-2;
  return (16.0 * five_point(h / 2) - five_point(h)) / 15.0;
}

double softplus_oracle(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct ToyBatch {
  HeadOutputs heads;
  BatchTargets targets;
};

ToyBatch random_batch(Rng& rng, size_t n, size_t h, size_t w, size_t nc, bool force_empty_image) {
  const size_t hw = h * w;
  ToyBatch tb;
  BatchTargets& t = tb.targets;
  t.batch = n;
  t.h = h;
  t.w = w;
  t.num_classes = nc;
  t.obj_pixels.assign(n, {});

  std::vector<std::vector<double>> heat(nc, std::vector<double>(n * hw));
  std::vector<std::vector<double>> yobj(nc, std::vector<double>(n * hw, 0.0));
  std::vector<double> wt(n * hw, 0.0), ht(n * hw, 0.0), ox(n * hw, 0.0), oy(n * hw, 0.0);
  for (size_t c = 0; c < nc; ++c)
    for (double& v : heat[c]) v = rng.uniform(0.0, 0.95);

  for (size_t i = 0; i < n; ++i) {
    int objs = (force_empty_image && i == 0) ? 0 : rng.uniform_int(0, 4);
    std::vector<size_t> pixels;
    for (int o = 0; o < objs; ++o) {
      size_t p = (size_t)rng.uniform_int(0, (int)hw - 1);
      if (std::find(pixels.begin(), pixels.end(), p) != pixels.end()) continue;
      pixels.push_back(p);
      size_t c = (size_t)rng.uniform_int(0, (int)nc - 1);
      heat[c][i * hw + p] = 1.0;
      yobj[c][i * hw + p] = 1.0;
      wt[i * hw + p] = rng.uniform(1.0, 8.0);
      ht[i * hw + p] = rng.uniform(1.0, 8.0);
      ox[i * hw + p] = rng.uniform();
      oy[i * hw + p] = rng.uniform();
    }
    std::sort(pixels.begin(), pixels.end());
    t.obj_pixels[i] = pixels;
  }
  for (size_t c = 0; c < nc; ++c) {
    t.heatmap.push_back(make_tensor({n, h, w}, heat[c], false));
    t.y_obj.push_back(make_tensor({n, h, w}, yobj[c], false));
  }
  t.w_target = make_tensor({n, h, w}, wt, false);
  t.h_target = make_tensor({n, h, w}, ht, false);
  t.off_x = make_tensor({n, h, w}, ox, false);
  t.off_y = make_tensor({n, h, w}, oy, false);

  auto rand_grid = [&](size_t channels, double lo, double hi) {
    std::vector<double> d(n * channels * hw);
    for (double& v : d) v = rng.uniform(lo, hi);
    return make_tensor({n, channels, h, w}, std::move(d), false);
  };
  tb.heads.obj_logits = rand_grid(2 * nc, -3.0, 3.0);
  tb.heads.wh_raw = rand_grid(8, -1.0, 3.0);
  tb.heads.off_raw = rand_grid(2, -0.5, 1.5);
  return tb;
}

LossBreakdown oracle_final_loss(const ToyBatch& tb, const ClassificationLossConfig& cc,
                                const RegressionLossConfig& rc, double lambda_cls) {
  const BatchTargets& t = tb.targets;
  const size_t n = t.batch, hw = t.h * t.w, nc = t.num_classes;
  const auto& logits = tb.heads.obj_logits.data();
  const auto& whr = tb.heads.wh_raw.data();
  const auto& offr = tb.heads.off_raw.data();

  LossBreakdown b;
  const size_t k_cls = std::max<size_t>(1, (size_t)std::llround(cc.n_cls_fraction * (double)(hw * n)));

  for (size_t c = 0; c < nc; ++c) {
    const auto& heat = t.heatmap[c].data();
    const auto& yo = t.y_obj[c].data();
    std::vector<double> p2v(n * hw), uv(n * hw);
    double theta_sum = 0, kl_sum = 0, focal_sum = 0;
    for (size_t i = 0; i < n; ++i) {
      long n2 = 0;
      for (size_t p = 0; p < hw; ++p) n2 += yo[i * hw + p] > 0.0 ? 1 : 0;
      double w1 = 1.0, w2 = 1.0;
      if (cc.use_class_balance) {
        if (n2 == 0 || n2 == (long)hw) {
          w1 = w2 = 0.0;
        } else {
          double e1 = (1 - cc.beta_cb) / (1 - std::pow(cc.beta_cb, (double)((long)hw - n2)));
          double e2 = (1 - cc.beta_cb) / (1 - std::pow(cc.beta_cb, (double)n2));
          w1 = 2 * e1 / (e1 + e2);
          w2 = 2 * e2 / (e1 + e2);
        }
      }
      for (size_t p = 0; p < hw; ++p) {
        const size_t g = i * hw + p;
        double l1 = logits[(i * 2 * nc + 2 * c) * hw + p];
        double l2 = logits[(i * 2 * nc + 2 * c + 1) * hw + p];
        double a1 = softplus_oracle(l1) + 1.0, a2 = softplus_oracle(l2) + 1.0;
        double s = a1 + a2;
        p2v[g] = a2 / s;
        uv[g] = 2.0 / s;
        double y2 = yo[g], y1 = 1.0 - y2;
        double wpix = y2 > 0.0 ? w2 : w1;
        theta_sum += wpix * (y1 * (psi_oracle(s) - psi_oracle(a1)) + y2 * (psi_oracle(s) - psi_oracle(a2)));
        double at1 = y1 + y2 * a1, at2 = y2 + y1 * a2, st = at1 + at2;
        kl_sum += wpix * (std::lgamma(st) - std::lgamma(at1) - std::lgamma(at2) +
                          (at1 - 1) * (psi_oracle(at1) - psi_oracle(st)) +
                          (at2 - 1) * (psi_oracle(at2) - psi_oracle(st)));
        if (heat[g] < 1.0) {
          double pc = std::min(1.0 - 1e-7, std::max(1e-7, p2v[g]));
          focal_sum += -std::pow(1.0 - heat[g], cc.eta) * std::pow(pc, cc.zeta) * std::log(1.0 - pc);
        }
      }
    }
    b.l_theta += theta_sum / (double)n;
    b.l_kl += kl_sum / (double)n;
    b.l_focal_neg += focal_sum / (double)n;

    std::vector<size_t> idx(n * hw);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t bb) {
      if (uv[a] != uv[bb]) return uv[a] > uv[bb];
      return a < bb;
    });
    size_t k = std::min(k_cls, idx.size());
    double mad = 0;
    for (size_t j = 0; j < k; ++j) mad += std::fabs(p2v[idx[j]] - heat[idx[j]]);
    b.l_un_cls += mad / (double)k;
  }

  size_t total_objects = 0;
  for (const auto& px : t.obj_pixels) total_objects += px.size();

  auto reg_dim = [&](size_t ch0, const std::vector<double>& ydim, double* nll_out, double* reg_out,
                     double* un_out) {
    if (total_objects == 0) return;
    std::vector<double> gam(n * hw), uu(n * hw);
    double nll_sum = 0, reg_sum = 0;
    for (size_t i = 0; i < n; ++i) {
      size_t nobj = t.obj_pixels[i].size();
      double kappa1 = 0;
      if (nobj > 0) {
        int ncl = std::min<int>((int)nobj, 2 * rc.n_obj_max - 1);
        kappa1 = std::log((double)(2 * rc.n_obj_max - ncl) / (double)ncl);
      }
      for (size_t p = 0; p < hw; ++p) {
        const size_t g = i * hw + p;
        double gamma = whr[(i * 8 + ch0) * hw + p];
        double v = std::max(softplus_oracle(whr[(i * 8 + ch0 + 1) * hw + p]), 1e-4);
        double alpha = std::max(softplus_oracle(whr[(i * 8 + ch0 + 2) * hw + p]) + 1.0, 1.0 + 1e-4);
        double beta = std::max(softplus_oracle(whr[(i * 8 + ch0 + 3) * hw + p]), 1e-4);
        gam[g] = gamma;
        uu[g] = std::sqrt(beta / (v * (alpha - 1.0)));
        if (nobj == 0) continue;
        double wpix = ydim[g] > 0.0 ? kappa1 : rc.kappa2;
        double omega = 2.0 * beta * (1.0 + v);
        double resid = ydim[g] - gamma;
        nll_sum += wpix * (0.5 * std::log(M_PI / v) - alpha * std::log(omega) +
                           (alpha + 0.5) * std::log(resid * resid * v + omega) + std::lgamma(alpha) -
                           std::lgamma(alpha + 0.5));
        reg_sum += wpix * std::fabs(resid) * (2.0 * v + alpha);
      }
    }
    *nll_out = nll_sum / (double)n;
    *reg_out = reg_sum / (double)n;

    std::vector<size_t> cand;
    for (size_t i = 0; i < n; ++i) {
      if (t.obj_pixels[i].empty()) continue;
      for (size_t p = 0; p < hw; ++p) cand.push_back(i * hw + p);
    }
    std::sort(cand.begin(), cand.end(), [&](size_t a, size_t bb) {
      if (uu[a] != uu[bb]) return uu[a] > uu[bb];
      return a < bb;
    });
    size_t k = std::min((size_t)std::max(1, rc.n_w), cand.size());
    double mad = 0;
    for (size_t j = 0; j < k; ++j) mad += std::fabs(gam[cand[j]] - ydim[cand[j]]);
    *un_out = mad / (double)k;
  };
  reg_dim(0, t.w_target.data(), &b.l_nll_w, &b.l_reg_w, &b.l_un_w);
  reg_dim(4, t.h_target.data(), &b.l_nll_h, &b.l_reg_h, &b.l_un_h);

  if (total_objects > 0) {
    double off = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t p : t.obj_pixels[i]) {
        off += std::fabs(offr[(i * 2 + 0) * hw + p] - t.off_x.data()[i * hw + p]);
        off += std::fabs(offr[(i * 2 + 1) * hw + p] - t.off_y.data()[i * hw + p]);
      }
    b.l_off = off / (double)total_objects;
  }

  b.total = kLambdaCls * (b.l_theta + lambda_cls * b.l_kl + b.l_focal_neg + cc.lambda_un_cls * b.l_un_cls) +
            kLambdaW * (b.l_nll_w + rc.lambda_w * b.l_reg_w + rc.lambda_un_reg * b.l_un_w) +
            kLambdaH * (b.l_nll_h + rc.lambda_w * b.l_reg_h + rc.lambda_un_reg * b.l_un_h) +
            kLambdaOff * b.l_off;
  return b;
}

void criterion3() {
  Rng rng(83);
  ClassificationLossConfig cc;
  RegressionLossConfig rc;
  rc.n_w = 11;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ToyBatch tb = random_batch(rng, 2, 8, 8, 2, trial % 5 == 0);
    double lambda_cls = rng.uniform(0.0, 0.06);
    auto gv = final_loss(tb.heads, tb.targets, cc, rc, lambda_cls).field_values();
    auto wv = oracle_final_loss(tb, cc, rc, lambda_cls).field_values();
    for (size_t f = 0; f < gv.size(); ++f)
      worst = std::max(worst, std::fabs(gv[f] - wv[f]) / std::max(1.0, std::fabs(wv[f])));
  }
  std::ostringstream os;
  os << "vectorized final_loss vs loop oracle, 20 random 8x8 grids, max relative deviation " << worst;
  report(3, worst <= 1e-9, os.str());
}

// ---- shared training helpers -----------------------------------------------

DatasetSplit load_or_generate(const fs::path& dir, int n_train, int n_val, double ood_frac,
                              uint64_t seed, const char* split) {
  if (!fs::exists(dir / "train" / "manifest.json"))
    generate_dataset(dir.string(), n_train, n_val, ood_frac, seed);
  return load_split((dir / split).string());
}

struct RunOutcome {
  EvalReport report;
  std::vector<EpochLog> log;
};

RunOutcome train_and_eval(const DatasetSplit& train_split, const DatasetSplit& val_split,
                          const TrainConfig& tc, bool class_balance) {
  DetectorModel model(ModelConfig{});
  ClassificationLossConfig cc;
  cc.use_class_balance = class_balance;
  TrainResult r = train(train_split, model, tc, cc, RegressionLossConfig{});
  RunOutcome out;
  out.log = r.log;
  out.report = evaluate(model, val_split, EvalConfig{});
  return out;
}

// ---- criterion 4: desk-scale reference run ---------------------------------

RunOutcome g_reference;  // reused by criterion 7's schedule checks
bool g_reference_ok = false;

void criterion4(const fs::path& scratch) {
  auto t0 = std::chrono::steady_clock::now();
  fs::path data = scratch / "desk";
  DatasetSplit train_split = load_or_generate(data, 400, 100, 0.3, 7, "train");
  DatasetSplit val_split = load_split((data / "val").string());

  TrainConfig tc;  // paper schedule at 40 epochs, batch 4, seed 7
  g_reference = train_and_eval(train_split, val_split, tc, true);
  g_reference_ok = true;
  double elapsed = seconds_since(t0);

  // 5-epoch moving average of the total loss must fall between consecutive
  // windows in at least 90% of the steps
  std::vector<double> totals;
  for (const EpochLog& e : g_reference.log) totals.push_back(e.mean_loss.total);
  std::vector<double> ma;
  for (size_t i = 0; i + 5 <= totals.size(); ++i)
    ma.push_back(std::accumulate(totals.begin() + i, totals.begin() + i + 5, 0.0) / 5.0);
  long drops = 0;
  for (size_t i = 1; i < ma.size(); ++i) drops += ma[i] < ma[i - 1] ? 1 : 0;
  double drop_frac = ma.size() > 1 ? (double)drops / (double)(ma.size() - 1) : 0.0;

  const EvalReport& r = g_reference.report;
  bool ok = r.map >= 0.70 && r.ece <= 0.15 && drop_frac >= 0.90 && elapsed <= 1800.0;
  std::ostringstream os;
  os << "desk training (400/100, 40 epochs, seed 7): mAP@0.5 " << r.map << " (>= 0.70), ECE " << r.ece
     << " (<= 0.15), moving-average drop fraction " << drop_frac << " (>= 0.90), " << elapsed
     << " s (<= 1800)";
  report(4, ok, os.str());
}

// ---- criteria 5 and 6: seed-median direction checks ------------------------

void criteria5and6(const fs::path& scratch) {
  // reduced profile: same recipe shape at a smaller corpus and epoch count so
  // the 3-seed medians stay affordable on one CPU core
  const int n_train = 160, n_val = 48, epochs = 24;
  std::vector<double> ratios, gaps;
  std::ostringstream detail5, detail6;
  for (uint64_t seed : {7ull, 8ull, 9ull}) {
    fs::path data = scratch / ("seed_" + std::to_string(seed));
    if (!fs::exists(data / "train" / "manifest.json"))
      generate_dataset(data.string(), n_train, n_val, 0.3, seed);
    DatasetSplit train_split = load_split((data / "train").string());
    DatasetSplit val_split = load_split((data / "val").string());

    TrainConfig tc;
    tc.epochs = epochs;
    tc.seed = seed;
    RunOutcome full = train_and_eval(train_split, val_split, tc, true);
    RunOutcome nocb = train_and_eval(train_split, val_split, tc, false);

    double ratio = full.report.mean_u_ood / full.report.mean_u_id;
    ratios.push_back(ratio);
    gaps.push_back(full.report.map - nocb.report.map);
    detail5 << " seed" << seed << "=" << ratio;
    detail6 << " seed" << seed << "=" << full.report.map << "-" << nocb.report.map;
  }
  auto median3 = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  double med_ratio = median3(ratios), med_gap = median3(gaps);
  {
    std::ostringstream os;
    os << "OOD/ID mean-U ratio median " << med_ratio << " (>= 1.2);" << detail5.str();
    report(5, med_ratio >= 1.2, os.str());
  }
  {
    std::ostringstream os;
    os << "class-balance ablation mAP drop median " << med_gap << " (>= 0.02);" << detail6.str();
    report(6, med_gap >= 0.02, os.str());
  }
}

// ---- criterion 7: schedule conformance -------------------------------------

void criterion7(const fs::path& scratch) {
  bool ok = true;
  std::ostringstream os;

  // lambda_cls trace of the reference run equals the exact linear ramp
  if (g_reference_ok) {
    const long steps_per_epoch = 100;  // 400 images, batch 4
    const long ramp = std::llround(60.0 / 80.0 * 40 * steps_per_epoch);
    for (size_t e = 0; e < g_reference.log.size(); ++e) {
      long last_iter = (long)(e + 1) * steps_per_epoch - 1;
      double want = std::min(0.06, 0.06 * (double)last_iter / (double)ramp);
      if (g_reference.log[e].lambda_cls != want) ok = false;
    }
    // LR takes exactly the three configured values
    for (size_t e = 0; e < g_reference.log.size(); ++e) {
      double want = e < 22 ? 1.25e-4 : (e < 30 ? 1.25e-5 : 1.25e-6);
      if (g_reference.log[e].lr != want) ok = false;
    }
  } else {
    ok = false;
    os << "(reference run unavailable) ";
  }

  // bitwise offset freeze: a run whose second epoch freezes the offset head
  // must leave those tensors exactly where the one-epoch prefix put them.
  // Epoch-count-dependent schedules are pinned so the prefix is shared.
  DatasetSplit small = load_or_generate(scratch / "freeze", 16, 4, 0.0, 11, "train");
  TrainConfig t2;
  t2.epochs = 2;
  t2.freeze_offset_frac = 0.5;
  t2.lambda_cls_max = 0.0;
  t2.decay_frac1 = t2.decay_frac2 = 1.0;
  t2.seed = 11;
  TrainConfig t1 = t2;
  t1.epochs = 1;
  t1.freeze_offset_frac = 1.0;
  DetectorModel m2(ModelConfig{}), m1(ModelConfig{});
  train(small, m2, t2, ClassificationLossConfig{}, RegressionLossConfig{});
  train(small, m1, t1, ClassificationLossConfig{}, RegressionLossConfig{});
  bool frozen_ok = false;
  for (auto& [name, t] : m2.params()) {
    if (name.rfind("off.", 0) != 0) continue;
    frozen_ok = true;
    if (t.data() != m1.param(name).data()) ok = frozen_ok = false;
  }
  ok = ok && frozen_ok;

  os << "lambda_cls ramp exact, LR values {1.25e-4, 1.25e-5, 1.25e-6} exact, offset tensors bitwise frozen";
  report(7, ok, os.str());
}

// ---- criterion 8: determinism ----------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void criterion8(const fs::path& scratch) {
  DatasetSplit train_split = load_or_generate(scratch / "det", 16, 8, 0.25, 13, "train");
  DatasetSplit val_split = load_split((scratch / "det" / "val").string());

  TrainConfig tc;
  tc.epochs = 4;
  tc.seed = 13;

  auto run_once = [&](const fs::path& out) {
    DetectorModel model(ModelConfig{});
    TrainResult r = train(train_split, model, tc, ClassificationLossConfig{}, RegressionLossConfig{});
    model.save_checkpoint((out / "model.evc").string());
    write_train_log_csv((out / "log.csv").string(), r.log);
    EvalReport rep = evaluate(model, val_split, EvalConfig{});
    std::ofstream os(out / "report.json", std::ios::binary);
    os << report_to_json(rep, "");  // fixed timestamp: excluded from comparison
  };
  fs::create_directories(scratch / "run_a");
  fs::create_directories(scratch / "run_b");
  run_once(scratch / "run_a");
  run_once(scratch / "run_b");

  bool ok = true;
  for (const char* f : {"model.evc", "log.csv", "report.json"}) {
    std::string a = file_bytes(scratch / "run_a" / f), b = file_bytes(scratch / "run_b" / f);
    if (a.empty() || a != b) ok = false;
  }
  report(8, ok, "identical-seed train+eval runs byte-identical (checkpoint, log, report)");
}

}  // namespace

int main() {
  fs::path scratch = fs::temp_directory_path() / "evcn_acceptance";
  fs::create_directories(scratch);

  criterion1();
  criterion2();
  criterion3();
  criterion4(scratch);
  criteria5and6(scratch);
  criterion7(scratch);
  criterion8(scratch);

  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
