#pragma once

#include <string>

#include "evcn/losses.hpp"
#include "evcn/metrics.hpp"
#include "evcn/model.hpp"
#include "evcn/trainer.hpp"

namespace evcn {

// Everything a run needs, loadable from one JSON file. Defaults match the
// shipped training recipe; unknown keys are rejected so typos fail loudly.
struct RunConfig {
  std::string data_dir = "data";
  ModelConfig model;  // also holds stride and image_size for the data section
  ClassificationLossConfig cls_loss;
  RegressionLossConfig reg_loss;
  TrainConfig train;
  EvalConfig eval;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  std::string to_json_text() const;
};

}  // namespace evcn
