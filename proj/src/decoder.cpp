#include "evcn/decoder.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

using json = nlohmann::json;

namespace evcn {

double Box::iou(const Box& o) const {
  double ix1 = std::max(x1, o.x1), iy1 = std::max(y1, o.y1);
  double ix2 = std::min(x2, o.x2), iy2 = std::min(y2, o.y2);
  double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
  double inter = iw * ih;
  double uni = (x2 - x1) * (y2 - y1) + (o.x2 - o.x1) * (o.y2 - o.y1) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Peak> extract_peaks(const Tensor& p_grid, int max_det, double threshold) {
  if (p_grid.rank() != 2) throw ShapeError("extract_peaks: expected (h,w) grid, got " + shape_str(p_grid.shape()));
  const size_t h = p_grid.dim(0), w = p_grid.dim(1);
  const auto& p = p_grid.data();
  std::vector<Peak> peaks;
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w; ++x) {
      const size_t idx = y * w + x;
      const double v = p[idx];
      if (v < threshold) continue;
      bool is_peak = true;
      for (long dy = -1; dy <= 1 && is_peak; ++dy) {
        for (long dx = -1; dx <= 1 && is_peak; ++dx) {
          if (dy == 0 && dx == 0) continue;
          long yy = (long)y + dy, xx = (long)x + dx;
          if (yy < 0 || yy >= (long)h || xx < 0 || xx >= (long)w) continue;
          size_t nidx = (size_t)yy * w + (size_t)xx;
          // ties go to the lowest flat index
          if (p[nidx] > v || (p[nidx] == v && nidx < idx)) is_peak = false;
        }
      }
      if (is_peak) peaks.push_back({x, y, v});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if ((int)peaks.size() > max_det) peaks.resize((size_t)max_det);
  return peaks;
}

std::vector<Detection> decode(const std::vector<Peak>& peaks, int class_id,
                              const ClassGrids& grids, int stride, const DecodeConfig& cfg) {
  const size_t h = grids.p_obj.dim(0), w = grids.p_obj.dim(1);
  std::vector<Detection> dets;
  for (const Peak& pk : peaks) {
    if (pk.x >= w || pk.y >= h) throw Error("decode: peak index outside grid (internal bug)");
    const size_t idx = pk.y * w + pk.x;
    Detection d;
    d.class_id = class_id;
    d.score = pk.score;
    d.u_cls = grids.u_cls.data()[idx];
    d.cx = (double(pk.x) + grids.off_x.data()[idx]) * stride;
    d.cy = (double(pk.y) + grids.off_y.data()[idx]) * stride;
    d.w = grids.gamma_w.data()[idx] * stride;
    d.h = grids.gamma_h.data()[idx] * stride;
    d.u_w = grids.u_w.data()[idx] * stride;
    d.u_h = grids.u_h.data()[idx] * stride;
    auto box_of = [&](double bw, double bh) {
      return Box{d.cx - bw / 2, d.cy - bh / 2, d.cx + bw / 2, d.cy + bh / 2};
    };
    const double m = cfg.band_multiplier;
    d.box = box_of(d.w, d.h);
    d.inner_box = box_of(std::max(0.0, d.w - m * d.u_w), std::max(0.0, d.h - m * d.u_h));
    d.outer_box = box_of(d.w + m * d.u_w, d.h + m * d.u_h);
    dets.push_back(d);
  }
  return dets;
}

std::vector<Detection> decode_image(const std::vector<ClassGrids>& per_class, int stride,
                                    const DecodeConfig& cfg) {
  std::vector<Detection> all;
  for (size_t c = 0; c < per_class.size(); ++c) {
    auto peaks = extract_peaks(per_class[c].p_obj, cfg.max_det, cfg.score_threshold);
    auto dets = decode(peaks, (int)c, per_class[c], stride, cfg);
    all.insert(all.end(), dets.begin(), dets.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if ((int)all.size() > cfg.max_det) all.resize((size_t)cfg.max_det);
  return all;
}

std::string detections_to_json(const std::vector<Detection>& dets) {
  json arr = json::array();
  for (const Detection& d : dets) {
    auto box = [](const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); };
    arr.push_back({{"class_id", d.class_id},
                   {"score", d.score},
                   {"u_cls", d.u_cls},
                   {"center", json::array({d.cx, d.cy})},
                   {"w", d.w},
                   {"h", d.h},
                   {"u_w", d.u_w},
                   {"u_h", d.u_h},
                   {"box", box(d.box)},
                   {"inner_box", box(d.inner_box)},
                   {"outer_box", box(d.outer_box)}});
  }
  return arr.dump(1);
}

}  // namespace evcn
