#pragma once

#include <map>
#include <string>
#include <vector>

#include "evcn/data.hpp"
#include "evcn/decoder.hpp"
#include "evcn/model.hpp"

namespace evcn {

struct GtBox {
  int cls = 0;
  Box box;
  double w = 0, h = 0;
};

// Detection paired with its match outcome against the ground truth.
struct MatchedDet {
  Detection det;
  int image = 0;
  bool tp = false;
  int gt_index = -1;  // into the image's gt list when tp
};

// Greedy matcher: detections in score order, each ground truth consumed at
// most once, IoU >= threshold, class must agree. Shared by AP, ECE and the
// UBQ surrogate so "correct" means the same thing everywhere.
std::vector<MatchedDet> match_detections(const std::vector<std::vector<Detection>>& dets_per_image,
                                         const std::vector<std::vector<GtBox>>& gts_per_image,
                                         double iou_thresh);

// 101-point interpolated AP per class. Classes with zero ground truth are
// absent from the result (undefined AP, excluded from mAP).
std::map<int, double> average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                                        const std::vector<std::vector<GtBox>>& gts_per_image,
                                        double iou_thresh = 0.5);

struct CalibrationBin {
  double lo = 0, hi = 0;
  long count = 0;
  double mean_conf = 0;
  double accuracy = 0;
};

std::vector<CalibrationBin> calibration_table(const std::vector<MatchedDet>& dets, int bins = 10);

// sum_b (count_b / N) * |acc_b - conf_b| over equal-width confidence bins.
double expected_calibration_error(const std::vector<MatchedDet>& dets, int bins = 10);

// Coverage-times-sharpness surrogate for dimension-uncertainty quality,
// averaged over matched pairs and the two dimensions. Not the externally
// defined UBQ; tested only through its own properties.
double ubq_surrogate(const std::vector<MatchedDet>& dets,
                     const std::vector<std::vector<GtBox>>& gts_per_image);

struct EvalConfig {
  int bins = 10;
  double iou_thresh = 0.5;
  DecodeConfig decode;          // score_threshold gates ECE/UBQ detections
  double ap_threshold = 0.01;   // low floor so AP sees the full score sweep
  bool pixel_level_ece = false; // bin heatmap pixels instead of detections
};

struct EvalReport {
  std::map<int, double> ap_per_class;
  double map = 0;
  double ece = 0;
  double ubq = 0;
  double mean_u_id = 0, mean_u_ood = 0;  // Dirichlet U at object center pixels
  std::vector<CalibrationBin> calibration;
};

// Per-class decoded state grids for every image of a split (eval forward).
std::vector<std::vector<ClassGrids>> model_grids(const DetectorModel& model,
                                                 const DatasetSplit& split);

// Mean heatmap uncertainty at in-distribution vs OOD object center pixels,
// averaged over class channels. Errors when a set is empty.
std::pair<double, double> ood_uncertainty_gap(const std::vector<std::vector<ClassGrids>>& grids,
                                              const DatasetSplit& split, int stride);

EvalReport evaluate(const DetectorModel& model, const DatasetSplit& split, const EvalConfig& cfg);

std::string report_to_json(const EvalReport& report, const std::string& timestamp);
void write_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& table);

std::vector<GtBox> gt_boxes(const SceneAnnotation& ann);

}  // namespace evcn
