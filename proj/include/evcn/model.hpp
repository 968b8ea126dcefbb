#pragma once

#include <string>
#include <vector>

#include "evcn/losses.hpp"
#include "evcn/rng.hpp"
#include "evcn/tensor.hpp"

namespace evcn {

struct ModelConfig {
  int image_size = 128;
  int stride = 4;
  int num_classes = 3;
  // 4 plain conv blocks, 3x3, leaky-relu; blocks 2 and 3 stride-2
  std::vector<int> backbone_channels = {16, 32, 64, 64};
  int head_channels = 64;  // hidden width of the pointwise evidential heads
  int obj_proj_channels = 24;  // per-class feature slice feeding the objectness stack
  double dropout_p = 0.2;
  bool dropout_wh = false;  // optional dropout on the width-height head
  double lrelu_slope = 0.01;
  uint64_t init_seed = 1;
};

// Desk-scale anchor-free detector: shared conv backbone, evidential
// objectness head (3 pointwise layers shared across classes, dropout),
// evidential width-height head, plain offset head.
class DetectorModel {
public:
  explicit DetectorModel(const ModelConfig& cfg);

  // images: (N, 1, H, W). Dropout is active only in train mode and draws
  // its masks from rng, so a fixed seed reproduces the forward exactly.
  HeadOutputs forward(const Tensor& images, bool train, Rng& rng) const;
  HeadOutputs forward(const Tensor& images) const;  // eval mode

  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor param(const std::string& name) const;
  size_t param_count() const;

  void zero_grads();

  // Checkpoint: magic "EVC1", u32 version, u32 tensor count, then per tensor
  // u16 name length + name, u32 rank, u32 extents, f64 LE payload.
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

private:
  Tensor conv_block(const Tensor& x, const std::string& name, size_t stride) const;
  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace evcn
