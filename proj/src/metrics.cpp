#include "evcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "evcn/heads.hpp"

using json = nlohmann::json;

namespace evcn {

std::vector<GtBox> gt_boxes(const SceneAnnotation& ann) {
  std::vector<GtBox> out;
  for (const SceneObject& o : ann.objects) {
    GtBox g;
    g.cls = o.cls;
    g.w = o.w;
    g.h = o.h;
    g.box = {o.cx - o.w / 2, o.cy - o.h / 2, o.cx + o.w / 2, o.cy + o.h / 2};
    out.push_back(g);
  }
  return out;
}

std::vector<MatchedDet> match_detections(const std::vector<std::vector<Detection>>& dets_per_image,
                                         const std::vector<std::vector<GtBox>>& gts_per_image,
                                         double iou_thresh) {
  if (dets_per_image.size() != gts_per_image.size())
    throw ValidationError("match_detections: image count mismatch");
  std::vector<MatchedDet> all;
  for (size_t i = 0; i < dets_per_image.size(); ++i)
    for (const Detection& d : dets_per_image[i]) all.push_back({d, (int)i, false, -1});
  std::stable_sort(all.begin(), all.end(),
                   [](const MatchedDet& a, const MatchedDet& b) { return a.det.score > b.det.score; });

  std::vector<std::vector<bool>> used(gts_per_image.size());
  for (size_t i = 0; i < gts_per_image.size(); ++i) used[i].assign(gts_per_image[i].size(), false);

  for (MatchedDet& md : all) {
    const auto& gts = gts_per_image[(size_t)md.image];
    double best_iou = iou_thresh;
    int best = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[(size_t)md.image][g] || gts[g].cls != md.det.class_id) continue;
      double iou = md.det.box.iou(gts[g].box);
      if (iou >= best_iou) {
        best_iou = iou;
        best = (int)g;
      }
    }
    if (best >= 0) {
      used[(size_t)md.image][(size_t)best] = true;
      md.tp = true;
      md.gt_index = best;
    }
  }
  return all;
}

std::map<int, double> average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                                        const std::vector<std::vector<GtBox>>& gts_per_image,
                                        double iou_thresh) {
  auto matched = match_detections(dets_per_image, gts_per_image, iou_thresh);
  std::map<int, long> gt_count;
  for (const auto& gts : gts_per_image)
    for (const GtBox& g : gts) ++gt_count[g.cls];

  std::map<int, double> ap;
  for (const auto& [cls, n_gt] : gt_count) {
    if (n_gt == 0) continue;
    // matched is already globally score-sorted; filter this class
    std::vector<double> precision, recall;
    long tp = 0, fp = 0;
    for (const MatchedDet& md : matched) {
      if (md.det.class_id != cls) continue;
      md.tp ? ++tp : ++fp;
      precision.push_back((double)tp / (double)(tp + fp));
      recall.push_back((double)tp / (double)n_gt);
    }
    // precision envelope: running max from the right
    std::vector<double> envelope = precision;
    for (size_t k = envelope.size(); k-- > 1;) envelope[k - 1] = std::max(envelope[k - 1], envelope[k]);
    // 101-point interpolation: max precision among points with recall >= r
    double acc = 0.0;
    size_t k = 0;
    for (int ri = 0; ri <= 100; ++ri) {
      double r = ri / 100.0;
      while (k < recall.size() && recall[k] < r - 1e-12) ++k;
      if (k < envelope.size()) acc += envelope[k];
    }
    ap[cls] = acc / 101.0;
  }
  return ap;
}

std::vector<CalibrationBin> calibration_table(const std::vector<MatchedDet>& dets, int bins) {
  if (bins < 1) throw ValidationError("calibration_table: bins must be >= 1");
  std::vector<CalibrationBin> table((size_t)bins);
  for (int b = 0; b < bins; ++b) {
    table[(size_t)b].lo = (double)b / bins;
    table[(size_t)b].hi = (double)(b + 1) / bins;
  }
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<long> tp_count(bins, 0);
  for (const MatchedDet& md : dets) {
    int b = std::min(bins - 1, (int)std::floor(md.det.score * bins));
    b = std::max(0, b);
    ++table[(size_t)b].count;
    conf_sum[(size_t)b] += md.det.score;
    if (md.tp) ++tp_count[(size_t)b];
  }
  for (int b = 0; b < bins; ++b) {
    if (table[(size_t)b].count > 0) {
      table[(size_t)b].mean_conf = conf_sum[(size_t)b] / table[(size_t)b].count;
      table[(size_t)b].accuracy = (double)tp_count[(size_t)b] / table[(size_t)b].count;
    }
  }
  return table;
}

double expected_calibration_error(const std::vector<MatchedDet>& dets, int bins) {
  if (dets.empty()) throw ValidationError("expected_calibration_error: zero detections");
  auto table = calibration_table(dets, bins);
  double ece = 0.0;
  for (const CalibrationBin& b : table)
    ece += ((double)b.count / (double)dets.size()) * std::fabs(b.accuracy - b.mean_conf);
  return ece;
}

double ubq_surrogate(const std::vector<MatchedDet>& dets,
                     const std::vector<std::vector<GtBox>>& gts_per_image) {
  double acc = 0.0;
  long pairs = 0;
  for (const MatchedDet& md : dets) {
    if (!md.tp) continue;
    const GtBox& gt = gts_per_image[(size_t)md.image][(size_t)md.gt_index];
    auto dim_score = [](double pred, double gt_dim, double u) {
      double coverage = std::fabs(gt_dim - pred) <= u ? 1.0 : 0.0;
      double sharpness = pred > 0.0 ? std::max(0.0, 1.0 - u / pred) : 0.0;
      return coverage * sharpness;
    };
    acc += 0.5 * (dim_score(md.det.w, gt.w, md.det.u_w) + dim_score(md.det.h, gt.h, md.det.u_h));
    ++pairs;
  }
  if (pairs == 0) throw ValidationError("ubq_surrogate: no matched pairs");
  return acc / (double)pairs;
}

// ---- model-side evaluation ------------------------------------------------

namespace {

// (h, w) copy of one channel of one image from an NCHW tensor
Tensor channel_slice(const Tensor& t, size_t n, size_t c) {
  const size_t h = t.dim(2), w = t.dim(3);
  std::vector<double> d(h * w);
  const double* src = t.data().data() + ((n * t.dim(1)) + c) * h * w;
  std::copy_n(src, h * w, d.begin());
  return make_tensor({h, w}, std::move(d), false);
}

}  // namespace

std::vector<std::vector<ClassGrids>> model_grids(const DetectorModel& model,
                                                 const DatasetSplit& split) {
  std::vector<std::vector<ClassGrids>> out;
  const int nc = model.config().num_classes;
  const size_t chunk = 8;  // batch the eval forwards for gemm efficiency
  for (size_t start = 0; start < split.samples.size(); start += chunk) {
    size_t end = std::min(split.samples.size(), start + chunk);
    const size_t n = end - start;
    const size_t h = split.samples[start].image.dim(1), w = split.samples[start].image.dim(2);
    std::vector<double> d(n * h * w);
    for (size_t i = 0; i < n; ++i)
      std::copy(split.samples[start + i].image.data().begin(), split.samples[start + i].image.data().end(),
                d.begin() + i * h * w);
    HeadOutputs heads = model.forward(make_tensor({n, 1, h, w}, std::move(d), false));

    for (size_t i = 0; i < n; ++i) {
      std::vector<ClassGrids> per_class;
      Tensor off_x = channel_slice(heads.off_raw, i, 0);
      Tensor off_y = channel_slice(heads.off_raw, i, 1);
      NigGrids nig_w = nig_from_raw(channel_slice(heads.wh_raw, i, 0), channel_slice(heads.wh_raw, i, 1),
                                    channel_slice(heads.wh_raw, i, 2), channel_slice(heads.wh_raw, i, 3));
      NigGrids nig_h = nig_from_raw(channel_slice(heads.wh_raw, i, 4), channel_slice(heads.wh_raw, i, 5),
                                    channel_slice(heads.wh_raw, i, 6), channel_slice(heads.wh_raw, i, 7));
      for (int c = 0; c < nc; ++c) {
        DirichletGrids dg = dirichlet_from_logits(channel_slice(heads.obj_logits, i, (size_t)(2 * c)),
                                                  channel_slice(heads.obj_logits, i, (size_t)(2 * c + 1)));
        ClassGrids g;
        g.p_obj = dg.p2;
        g.u_cls = dg.u;
        g.off_x = off_x;
        g.off_y = off_y;
        g.gamma_w = nig_w.gamma;
        g.u_w = nig_w.u;
        g.gamma_h = nig_h.gamma;
        g.u_h = nig_h.u;
        per_class.push_back(g);
      }
      out.push_back(std::move(per_class));
    }
  }
  return out;
}

std::pair<double, double> ood_uncertainty_gap(const std::vector<std::vector<ClassGrids>>& grids,
                                              const DatasetSplit& split, int stride) {
  double id_sum = 0, ood_sum = 0;
  long id_n = 0, ood_n = 0;
  for (size_t i = 0; i < split.samples.size(); ++i) {
    const auto& per_class = grids[i];
    const size_t w = per_class[0].u_cls.dim(1), h = per_class[0].u_cls.dim(0);
    auto mean_u_at = [&](const SceneObject& o) {
      size_t px = std::min(w - 1, (size_t)(o.cx / stride));
      size_t py = std::min(h - 1, (size_t)(o.cy / stride));
      double acc = 0;
      for (const ClassGrids& g : per_class) acc += g.u_cls.data()[py * w + px];
      return acc / (double)per_class.size();
    };
    for (const SceneObject& o : split.samples[i].ann.objects) {
      id_sum += mean_u_at(o);
      ++id_n;
    }
    for (const SceneObject& o : split.samples[i].ann.ood_objects) {
      ood_sum += mean_u_at(o);
      ++ood_n;
    }
  }
  if (id_n == 0 || ood_n == 0) throw ValidationError("ood_uncertainty_gap: empty object set");
  return {id_sum / (double)id_n, ood_sum / (double)ood_n};
}

EvalReport evaluate(const DetectorModel& model, const DatasetSplit& split, const EvalConfig& cfg) {
  if (split.samples.empty()) throw ValidationError("evaluate: empty split");
  auto grids = model_grids(model, split);
  const int stride = model.config().stride;

  std::vector<std::vector<GtBox>> gts;
  for (const Sample& s : split.samples) gts.push_back(gt_boxes(s.ann));

  // AP over the full score sweep; ECE/UBQ over the reporting threshold
  DecodeConfig sweep = cfg.decode;
  sweep.score_threshold = cfg.ap_threshold;
  std::vector<std::vector<Detection>> dets_sweep, dets_report;
  for (const auto& per_class : grids) {
    dets_sweep.push_back(decode_image(per_class, stride, sweep));
    dets_report.push_back(decode_image(per_class, stride, cfg.decode));
  }

  EvalReport report;
  report.ap_per_class = average_precision(dets_sweep, gts, cfg.iou_thresh);
  double acc = 0;
  for (const auto& [cls, ap] : report.ap_per_class) acc += ap;
  report.map = report.ap_per_class.empty() ? 0.0 : acc / (double)report.ap_per_class.size();

  auto matched = match_detections(dets_report, gts, cfg.iou_thresh);
  if (cfg.pixel_level_ece) {
    // heatmap-pixel calibration: each pixel's p(object) scored against the
    // binary center label
    std::vector<MatchedDet> pixels;
    for (size_t i = 0; i < split.samples.size(); ++i) {
      ImageTargets t = build_targets(split.samples[i].ann, stride, model.config().image_size,
                                     model.config().num_classes);
      for (size_t c = 0; c < grids[i].size(); ++c) {
        const auto& p = grids[i][c].p_obj.data();
        for (size_t px = 0; px < p.size(); ++px) {
          MatchedDet md;
          md.det.score = p[px];
          md.tp = t.y_obj[c][px] > 0.0;
          pixels.push_back(md);
        }
      }
    }
    report.calibration = calibration_table(pixels, cfg.bins);
    report.ece = expected_calibration_error(pixels, cfg.bins);
  } else if (!matched.empty()) {
    report.calibration = calibration_table(matched, cfg.bins);
    report.ece = expected_calibration_error(matched, cfg.bins);
  }
  bool any_tp = std::any_of(matched.begin(), matched.end(), [](const MatchedDet& m) { return m.tp; });
  report.ubq = any_tp ? ubq_surrogate(matched, gts) : 0.0;

  bool any_ood = std::any_of(split.samples.begin(), split.samples.end(),
                             [](const Sample& s) { return !s.ann.ood_objects.empty(); });
  bool any_id = std::any_of(split.samples.begin(), split.samples.end(),
                            [](const Sample& s) { return !s.ann.objects.empty(); });
  if (any_ood && any_id) {
    auto [id_u, ood_u] = ood_uncertainty_gap(grids, split, stride);
    report.mean_u_id = id_u;
    report.mean_u_ood = ood_u;
  }
  return report;
}

std::string report_to_json(const EvalReport& r, const std::string& timestamp) {
  json per_class = json::object();
  for (const auto& [cls, ap] : r.ap_per_class) per_class[std::to_string(cls)] = ap;
  json calib = json::array();
  for (const CalibrationBin& b : r.calibration)
    calib.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"count", b.count}, {"mean_conf", b.mean_conf}, {"accuracy", b.accuracy}});
  json j = {{"ap_per_class", per_class}, {"map", r.map},           {"ece", r.ece},
            {"ubq", r.ubq},              {"mean_u_id", r.mean_u_id}, {"mean_u_ood", r.mean_u_ood},
            {"calibration", calib},      {"timestamp", timestamp}};
  return j.dump(1);
}

void write_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& table) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write calibration csv: " + path);
  os << "bin_lo,bin_hi,count,mean_conf,accuracy\n";
  os.precision(17);
  for (const CalibrationBin& b : table)
    os << b.lo << "," << b.hi << "," << b.count << "," << b.mean_conf << "," << b.accuracy << "\n";
}

}  // namespace evcn
