#include "evcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace evcn {

double lambda_cls_at(long iter, long total_ramp_iters, double max) {
  if (total_ramp_iters < 1) throw ValidationError("lambda_cls_at: total_ramp_iters must be >= 1");
  if (iter < 0) throw ValidationError("lambda_cls_at: negative iteration");
  return std::min(max, max * (double)iter / (double)total_ramp_iters);
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  // paper schedule encoded as epoch fractions: decays land after the same
  // relative position regardless of total epoch count
  int e1 = (int)std::floor(cfg.decay_frac1 * cfg.epochs + 1e-9);
  int e2 = (int)std::floor(cfg.decay_frac2 * cfg.epochs + 1e-9);
  if (epoch < e1) return cfg.lr0;
  if (epoch < e2) return cfg.lr0 / 10.0;
  return cfg.lr0 / 100.0;
}

void adamw_step(Tensor& param, const std::vector<double>& grad, std::vector<double>& m,
                std::vector<double>& v, long step, double lr, const TrainConfig& cfg,
                long* skipped) {
  if (grad.size() != param.numel() || m.size() != param.numel() || v.size() != param.numel())
    throw ShapeError("adamw_step: state size mismatch for parameter of " + std::to_string(param.numel()) + " elements");
  for (double g : grad) {
    if (!std::isfinite(g)) {
      if (skipped) ++*skipped;
      return;
    }
  }
  auto& p = param.data();
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)step);
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] *= 1.0 - lr * cfg.weight_decay;  // decoupled decay
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double m_hat = m[i] / bc1;
    double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write training log: " + path);
  os << "epoch";
  for (const char* name : LossBreakdown::field_names()) os << "," << name;
  os << ",lr,lambda_cls\n";
  os.precision(17);
  for (const EpochLog& e : log) {
    os << e.epoch;
    for (double v : e.mean_loss.field_values()) os << "," << v;
    os << "," << e.lr << "," << e.lambda_cls << "\n";
  }
}

namespace {

Tensor stack_images(const std::vector<const Sample*>& batch) {
  const size_t n = batch.size();
  const size_t h = batch[0]->image.dim(1), w = batch[0]->image.dim(2);
  std::vector<double> d(n * h * w);
  for (size_t i = 0; i < n; ++i)
    std::copy(batch[i]->image.data().begin(), batch[i]->image.data().end(), d.begin() + i * h * w);
  return make_tensor({n, 1, h, w}, std::move(d), false);
}

}  // namespace

TrainResult train(const DatasetSplit& dataset, DetectorModel& model, const TrainConfig& cfg,
                  const ClassificationLossConfig& cls_cfg, const RegressionLossConfig& reg_cfg) {
  if (dataset.samples.empty()) throw ValidationError("train: empty dataset");
  if (cfg.batch < 1 || cfg.epochs < 1) throw ValidationError("train: batch and epochs must be >= 1");

  const ModelConfig& mc = model.config();
  std::vector<ImageTargets> targets;
  targets.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples)
    targets.push_back(build_targets(s.ann, mc.stride, mc.image_size, mc.num_classes));

  const long steps_per_epoch = (long)((dataset.samples.size() + cfg.batch - 1) / cfg.batch);
  const long ramp_iters = std::max<long>(1, (long)std::llround(cfg.lambda_cls_ramp_frac * cfg.epochs * steps_per_epoch));
  const int freeze_epoch = (int)std::floor(cfg.freeze_offset_frac * cfg.epochs + 1e-9);

  AdamWState opt;
  for (const auto& [name, t] : model.params()) {
    opt.m[name].assign(t.numel(), 0.0);
    opt.v[name].assign(t.numel(), 0.0);
  }

  auto frozen = [&](const std::string& name, int epoch) {
    if (epoch < freeze_epoch) return false;
    if (name.rfind("off.", 0) == 0) return true;
    return cfg.freeze_backbone_too && name.rfind("backbone.", 0) == 0;
  };

  TrainResult result;
  long iter = 0;
  int consecutive_nonfinite = 0;
  std::vector<size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(cfg.seed, Rng::mix(0x51u, (uint64_t)epoch)));
    shuffle_rng.shuffle(order);
    const double lr = lr_at_epoch(epoch, cfg);

    std::vector<double> term_sums(LossBreakdown::field_names().size(), 0.0);
    double lambda_cls = 0.0;
    long steps_this_epoch = 0;

    for (size_t start = 0; start < order.size(); start += (size_t)cfg.batch) {
      size_t end = std::min(order.size(), start + (size_t)cfg.batch);
      std::vector<const Sample*> batch;
      std::vector<ImageTargets> batch_t;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(&dataset.samples[order[i]]);
        batch_t.push_back(targets[order[i]]);
      }
      lambda_cls = lambda_cls_at(iter, ramp_iters, cfg.lambda_cls_max);

      Tensor images = stack_images(batch);
      BatchTargets bt = batch_targets(batch_t);
      Rng dropout_rng(Rng::mix(cfg.seed, Rng::mix(0xd0u, (uint64_t)iter)));

      LossBreakdown loss;
      bool ok = true;
      try {
        Tape tape;
        TapeScope scope(tape);
        HeadOutputs heads = model.forward(images, true, dropout_rng);
        loss = final_loss(heads, bt, cls_cfg, reg_cfg, lambda_cls);
        if (!std::isfinite(loss.total)) throw NumericError("train: non-finite total loss");
        model.zero_grads();
        tape.backward(loss.total_tensor);
      } catch (const NumericError&) {
        ok = false;
      }

      if (!ok) {
        ++result.nonfinite_steps;
        if (++consecutive_nonfinite >= 3) {
          std::ostringstream os;
          os << "train: non-finite loss for 3 consecutive steps at iter " << iter << "; last breakdown:";
          auto vals = loss.field_values();
          for (size_t i = 0; i < vals.size(); ++i)
            os << " " << LossBreakdown::field_names()[i] << "=" << vals[i];
          throw NumericError(os.str());
        }
        ++iter;
        continue;
      }
      consecutive_nonfinite = 0;

      ++opt.step;
      for (auto& [name, t] : model.params()) {
        if (frozen(name, epoch)) continue;
        adamw_step(t, t.grad(), opt.m[name], opt.v[name], opt.step, lr, cfg, &opt.skipped_nonfinite);
      }

      auto vals = loss.field_values();
      for (size_t i = 0; i < vals.size(); ++i) term_sums[i] += vals[i];
      ++steps_this_epoch;
      ++iter;
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.lambda_cls = lambda_cls;
    if (steps_this_epoch > 0) {
      double inv = 1.0 / (double)steps_this_epoch;
      LossBreakdown& b = log.mean_loss;
      double* fields[] = {&b.l_theta, &b.l_kl, &b.l_focal_neg, &b.l_un_cls, &b.l_nll_w, &b.l_reg_w,
                          &b.l_un_w,  &b.l_nll_h, &b.l_reg_h,  &b.l_un_h,   &b.l_off,   &b.total};
      for (size_t i = 0; i < term_sums.size(); ++i) *fields[i] = term_sums[i] * inv;
    }
    result.log.push_back(log);
  }
  return result;
}

}  // namespace evcn
