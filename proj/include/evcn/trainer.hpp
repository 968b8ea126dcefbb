#pragma once

#include <map>
#include <string>
#include <vector>

#include "evcn/data.hpp"
#include "evcn/losses.hpp"
#include "evcn/model.hpp"

namespace evcn {

struct TrainConfig {
  double lr0 = 1.25e-4;
  double decay_frac1 = 45.0 / 80.0;  // LR /10 from this epoch fraction
  double decay_frac2 = 60.0 / 80.0;  // LR /100 from this epoch fraction
  int epochs = 40;
  double freeze_offset_frac = 70.0 / 80.0;
  bool freeze_backbone_too = false;  // stricter reading of the freeze rule
  int batch = 4;
  double lambda_cls_max = 0.06;
  double lambda_cls_ramp_frac = 60.0 / 80.0;  // linear ramp until this fraction
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-2;
  uint64_t seed = 7;
};

// Linear annealing of the KL coefficient: 0 at iter 0, max at the ramp end,
// constant afterwards.
double lambda_cls_at(long iter, long total_ramp_iters, double max = 0.06);

// Piecewise-constant learning rate for a 0-based epoch index.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

struct AdamWState {
  std::map<std::string, std::vector<double>> m, v;
  long step = 0;
  long skipped_nonfinite = 0;  // tensors skipped due to non-finite gradients
};

// One decoupled-weight-decay Adam update on a single tensor. Decay is applied
// multiplicatively before the Adam step; a non-finite gradient skips the
// tensor entirely and bumps the skip counter.
void adamw_step(Tensor& param, const std::vector<double>& grad, std::vector<double>& m,
                std::vector<double>& v, long step, double lr, const TrainConfig& cfg,
                long* skipped);

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean_loss;
  double lr = 0, lambda_cls = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  long nonfinite_steps = 0;
};

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log);

// Full training loop: deterministic shuffling by seed, AdamW with the staged
// LR decay, lambda_cls annealing, offset-head freezing, per-epoch loss log.
// Three consecutive non-finite steps abort with a NumericError carrying the
// offending breakdown.
TrainResult train(const DatasetSplit& dataset, DetectorModel& model, const TrainConfig& cfg,
                  const ClassificationLossConfig& cls_cfg, const RegressionLossConfig& reg_cfg);

}  // namespace evcn
