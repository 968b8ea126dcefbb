#pragma once

#include <string>
#include <vector>

#include "evcn/losses.hpp"
#include "evcn/tensor.hpp"

namespace evcn {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double iou(const Box& other) const;
};

// One decoded detection in input-pixel coordinates, with the classification
// uncertainty at the peak and the regressed dimension uncertainty bands.
struct Detection {
  int class_id = 0;
  double score = 0;  // p(object) at the peak
  double u_cls = 0;  // Dirichlet U at the peak
  double cx = 0, cy = 0;
  double w = 0, h = 0;
  double u_w = 0, u_h = 0;  // input pixels
  Box box, inner_box, outer_box;
};

struct Peak {
  size_t x = 0, y = 0;
  double score = 0;
};

struct DecodeConfig {
  int max_det = 50;
  double score_threshold = 0.5;
  double band_multiplier = 1.0;  // inner/outer band width in units of U
};

// 3x3 neighborhood maxima of one probability grid (h, w). A pixel is a peak
// iff no neighbor beats it and no equal-valued neighbor has a lower flat
// index. Peaks come back sorted by score descending (ties by flat index),
// thresholded and capped at max_det.
std::vector<Peak> extract_peaks(const Tensor& p_grid, int max_det, double threshold);

// Per-class head state for one image; all grids (h, w). Dimensions and their
// uncertainties are in downsampled units, scaled by the stride at decode.
struct ClassGrids {
  Tensor p_obj, u_cls;
  Tensor off_x, off_y;
  Tensor gamma_w, u_w, gamma_h, u_h;
};

// Turns peaks of one class into detections: center = (peak + offset) * R,
// dimensions = gamma * R, uncertainty band per DecodeConfig.
std::vector<Detection> decode(const std::vector<Peak>& peaks, int class_id,
                              const ClassGrids& grids, int stride, const DecodeConfig& cfg);

// All classes of one image: peak extraction + decode, merged and re-capped
// at max_det with scores non-increasing.
std::vector<Detection> decode_image(const std::vector<ClassGrids>& per_class, int stride,
                                    const DecodeConfig& cfg);

// JSON array of detection records for one image.
std::string detections_to_json(const std::vector<Detection>& dets);

}  // namespace evcn
