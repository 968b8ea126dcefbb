#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "evcn/decoder.hpp"
#include "evcn/rng.hpp"

using namespace evcn;

namespace {

// brute-force oracle: scan every pixel's full neighborhood
std::vector<Peak> peaks_oracle(const Tensor& grid, int max_det, double threshold) {
  const size_t h = grid.dim(0), w = grid.dim(1);
  const auto& p = grid.data();
  std::vector<Peak> out;
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      const size_t idx = y * w + x;
      if (p[idx] < threshold) continue;
      bool peak = true;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          long yy = (long)y + dy, xx = (long)x + dx;
          if (yy < 0 || yy >= (long)h || xx < 0 || xx >= (long)w) continue;
          size_t ni = (size_t)yy * w + (size_t)xx;
          if (p[ni] > p[idx] || (p[ni] == p[idx] && ni < idx)) peak = false;
        }
      if (peak) out.push_back({x, y, p[idx]});
    }
  std::stable_sort(out.begin(), out.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if ((int)out.size() > max_det) out.resize((size_t)max_det);
  return out;
}

ClassGrids const_grids(size_t h, size_t w, double p_obj) {
  ClassGrids g;
  g.p_obj = Tensor::full({h, w}, p_obj);
  g.u_cls = Tensor::full({h, w}, 0.3);
  g.off_x = Tensor::full({h, w}, 0.0);
  g.off_y = Tensor::full({h, w}, 0.0);
  g.gamma_w = Tensor::full({h, w}, 2.0);
  g.u_w = Tensor::full({h, w}, 0.5);
  g.gamma_h = Tensor::full({h, w}, 3.0);
  g.u_h = Tensor::full({h, w}, 0.5);
  return g;
}

}  // namespace

TEST_CASE("single isolated maximum gives exactly one peak") {
  std::vector<double> d(64, 0.0);
  d[3 * 8 + 5] = 1.0;
  auto peaks = extract_peaks(make_tensor({8, 8}, d, false), 50, 0.3);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].x == 5);
  CHECK(peaks[0].y == 3);
  CHECK(peaks[0].score == 1.0);
}

TEST_CASE("uniform plateau keeps at most one peak under the tie rule") {
  auto peaks = extract_peaks(Tensor::full({6, 6}, 0.7), 50, 0.3);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].x == 0);
  CHECK(peaks[0].y == 0);
}

TEST_CASE("threshold above every score empties the list") {
  CHECK(extract_peaks(Tensor::full({4, 4}, 1.0), 50, 1.1).empty());
}

TEST_CASE("random grids match the brute-force oracle") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(12 * 12);
    // coarse quantization forces plenty of ties
    for (double& v : d) v = (double)rng.uniform_int(0, 9) / 10.0;
    Tensor g = make_tensor({12, 12}, d, false);
    auto got = extract_peaks(g, 10, 0.25);
    auto want = peaks_oracle(g, 10, 0.25);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].x == want[i].x);
      CHECK(got[i].y == want[i].y);
      CHECK(got[i].score == want[i].score);
    }
    // scores are non-increasing
    for (size_t i = 1; i < got.size(); ++i) CHECK(got[i].score <= got[i - 1].score);
  }
}

TEST_CASE("decode hand arithmetic") {
  const size_t h = 16, w = 16;
  ClassGrids g = const_grids(h, w, 0.0);
  // peak (10,5), delta (0.5, 0.5), gamma_w 4, gamma_h 8, R 4
  g.off_x.data()[5 * w + 10] = 0.5;
  g.off_y.data()[5 * w + 10] = 0.5;
  g.gamma_w.data()[5 * w + 10] = 4.0;
  g.gamma_h.data()[5 * w + 10] = 8.0;
  g.u_w.data()[5 * w + 10] = 0.0;
  g.u_h.data()[5 * w + 10] = 0.0;
  auto dets = decode({{10, 5, 0.9}}, 2, g, 4, DecodeConfig{});
  REQUIRE(dets.size() == 1);
  const Detection& d = dets[0];
  CHECK(d.class_id == 2);
  CHECK(d.score == 0.9);
  CHECK(d.cx == doctest::Approx(42.0));
  CHECK(d.cy == doctest::Approx(22.0));
  CHECK(d.w == doctest::Approx(16.0));
  CHECK(d.h == doctest::Approx(32.0));
  CHECK(d.box.x1 == doctest::Approx(34.0));
  CHECK(d.box.y1 == doctest::Approx(6.0));
  CHECK(d.box.x2 == doctest::Approx(50.0));
  CHECK(d.box.y2 == doctest::Approx(38.0));
  // U = 0: all three boxes coincide
  CHECK(d.inner_box.x1 == d.box.x1);
  CHECK(d.outer_box.x2 == d.box.x2);
}

TEST_CASE("identity stride maps peaks to grid coordinates") {
  ClassGrids g = const_grids(8, 8, 0.0);
  auto dets = decode({{3, 6, 0.8}}, 0, g, 1, DecodeConfig{});
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].cx == doctest::Approx(3.0));
  CHECK(dets[0].cy == doctest::Approx(6.0));
}

TEST_CASE("uncertainty bands nest: inner inside box inside outer") {
  ClassGrids g = const_grids(8, 8, 0.0);
  auto dets = decode({{2, 2, 0.9}}, 0, g, 4, DecodeConfig{});
  REQUIRE(dets.size() == 1);
  const Detection& d = dets[0];
  CHECK(d.inner_box.x1 >= d.box.x1);
  CHECK(d.inner_box.x2 <= d.box.x2);
  CHECK(d.outer_box.x1 <= d.box.x1);
  CHECK(d.outer_box.y2 >= d.box.y2);
  CHECK(d.u_w == doctest::Approx(0.5 * 4.0));  // scaled to input pixels
}

TEST_CASE("decode_image merges classes, sorted and capped") {
  std::vector<ClassGrids> per_class;
  for (int c = 0; c < 3; ++c) {
    ClassGrids g = const_grids(8, 8, 0.0);
    std::vector<double>& p = g.p_obj.data();
    p[2 * 8 + 2] = 0.4 + 0.1 * c;  // one peak per class, different scores
    per_class.push_back(g);
  }
  DecodeConfig cfg;
  cfg.score_threshold = 0.35;
  auto dets = decode_image(per_class, 4, cfg);
  REQUIRE(dets.size() == 3);
  CHECK(dets[0].class_id == 2);
  CHECK(dets[1].class_id == 1);
  CHECK(dets[2].class_id == 0);
  cfg.max_det = 2;
  CHECK(decode_image(per_class, 4, cfg).size() == 2);
}

TEST_CASE("horizontal flip equivariance") {
  Rng rng(67);
  const size_t h = 8, w = 8;
  ClassGrids g = const_grids(h, w, 0.0);
  for (double& v : g.p_obj.data()) v = rng.uniform(0.0, 0.6);
  g.p_obj.data()[3 * w + 2] = 0.95;

  ClassGrids f = const_grids(h, w, 0.0);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) f.p_obj.data()[y * w + (w - 1 - x)] = g.p_obj.data()[y * w + x];
  // flipped offsets: delta_x' = 1 - delta_x
  for (double& v : f.off_x.data()) v = 1.0 - 0.0;
  f.off_x = Tensor::full({h, w}, 1.0);

  DecodeConfig cfg;
  cfg.score_threshold = 0.9;
  auto a = decode_image({g}, 4, cfg);
  auto b = decode_image({f}, 4, cfg);
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  // mirrored center: x + x' = grid width in input pixels
  CHECK(a[0].cx + b[0].cx == doctest::Approx((double)(w * 4)).epsilon(1e-9));
  CHECK(a[0].cy == doctest::Approx(b[0].cy));
}

TEST_CASE("iou basics") {
  Box a{0, 0, 10, 10}, b{5, 0, 15, 10}, c{20, 20, 30, 30};
  CHECK(a.iou(a) == doctest::Approx(1.0));
  CHECK(a.iou(b) == doctest::Approx(50.0 / 150.0));
  CHECK(a.iou(c) == 0.0);
}

TEST_CASE("detections serialize to json with the documented fields") {
  ClassGrids g = const_grids(8, 8, 0.0);
  auto dets = decode({{1, 1, 0.7}}, 0, g, 4, DecodeConfig{});
  std::string j = detections_to_json(dets);
  for (const char* key : {"class_id", "score", "u_cls", "center", "\"w\"", "\"h\"", "u_w", "u_h",
                          "\"box\"", "inner_box", "outer_box"})
    CHECK(j.find(key) != std::string::npos);
}
