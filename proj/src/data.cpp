#include "evcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "evcn/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace evcn {

namespace {

bool inside_triangle(double px, double py, const SceneObject& o) {
  // apex top-center, base at the bottom of the box
  double ax = o.cx, ay = o.cy - o.h / 2;
  double bx = o.cx - o.w / 2, by = o.cy + o.h / 2;
  double cx = o.cx + o.w / 2, cy = o.cy + o.h / 2;
  auto side = [](double x1, double y1, double x2, double y2, double x, double y) {
    return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
  };
  double s1 = side(ax, ay, bx, by, px, py);
  double s2 = side(bx, by, cx, cy, px, py);
  double s3 = side(cx, cy, ax, ay, px, py);
  return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
}

bool inside_ellipse(double px, double py, const SceneObject& o, double scale) {
  double dx = (px - o.cx) / (scale * o.w / 2);
  double dy = (py - o.cy) / (scale * o.h / 2);
  return dx * dx + dy * dy <= 1.0;
}

void rasterize(std::vector<double>& img, int size, const SceneObject& o, bool ring,
               const SynthConfig& cfg) {
  int x0 = std::max(0, (int)std::floor(o.cx - o.w / 2));
  int x1 = std::min(size - 1, (int)std::ceil(o.cx + o.w / 2));
  int y0 = std::max(0, (int)std::floor(o.cy - o.h / 2));
  int y1 = std::min(size - 1, (int)std::ceil(o.cy + o.h / 2));
  double intensity = ring ? cfg.ring_intensity : cfg.class_intensity[o.cls];
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5, py = y + 0.5;
      bool hit = false;
      if (ring) {
        hit = inside_ellipse(px, py, o, 1.0) && !inside_ellipse(px, py, o, 0.55);
      } else if (o.cls == kBoxVehicle) {
        hit = px >= o.cx - o.w / 2 && px <= o.cx + o.w / 2 && py >= o.cy - o.h / 2 && py <= o.cy + o.h / 2;
      } else if (o.cls == kDiscPerson) {
        hit = inside_ellipse(px, py, o, 1.0);
      } else {
        hit = inside_triangle(px, py, o);
      }
      if (hit) img[(size_t)y * size + x] = intensity;
    }
  }
}

}  // namespace

std::pair<Tensor, SceneAnnotation> render_scene(uint64_t seed, bool ood, const SynthConfig& cfg) {
  Rng rng(seed);
  const int size = cfg.image_size;
  std::vector<double> img((size_t)size * size);
  for (double& v : img) v = std::clamp(rng.normal(0.2, 0.05), 0.0, 1.0);

  int count = rng.uniform_int(ood ? 1 : 0, cfg.max_objects);
  SceneAnnotation ann;
  std::vector<std::pair<SceneObject, bool>> drawn;  // object, is_ring
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    double r = rng.uniform();
    o.cls = r < cfg.class_probs[0] ? 0 : (r < cfg.class_probs[0] + cfg.class_probs[1] ? 1 : 2);
    o.w = rng.uniform(cfg.min_dim, cfg.max_dim) * cfg.class_size[o.cls];
    o.h = (o.cls == kDiscPerson) ? o.w
                                 : rng.uniform(cfg.min_dim, cfg.max_dim) * cfg.class_size[o.cls];
    o.cx = rng.uniform(o.w / 2, size - o.w / 2);
    o.cy = rng.uniform(o.h / 2, size - o.h / 2);
    bool is_ring = ood && i == count - 1;
    drawn.push_back({o, is_ring});
  }
  for (auto& [o, is_ring] : drawn) {
    rasterize(img, size, o, is_ring, cfg);
    if (is_ring)
      ann.ood_objects.push_back(o);
    else
      ann.objects.push_back(o);
  }
  Tensor t = make_tensor({1, (size_t)size, (size_t)size}, std::move(img), false);
  return {t, ann};
}

double gaussian_radius(double height, double width, double min_overlap) {
  // the three overlap cases of the CornerNet radius rule
  double a1 = 1, b1 = height + width, c1 = width * height * (1 - min_overlap) / (1 + min_overlap);
  double r1 = (b1 + std::sqrt(b1 * b1 - 4 * a1 * c1)) / 2;
  double a2 = 4, b2 = 2 * (height + width), c2 = (1 - min_overlap) * width * height;
  double r2 = (b2 + std::sqrt(b2 * b2 - 4 * a2 * c2)) / 2;
  double a3 = 4 * min_overlap, b3 = -2 * min_overlap * (height + width), c3 = (min_overlap - 1) * width * height;
  double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

ImageTargets build_targets(const SceneAnnotation& ann, int stride, int image_size, int num_classes) {
  if (image_size % stride != 0)
    throw ValidationError("build_targets: stride " + std::to_string(stride) + " does not divide image size " + std::to_string(image_size));
  const size_t hs = (size_t)(image_size / stride), ws = hs;
  ImageTargets t;
  t.h = hs;
  t.w = ws;
  t.heatmap.assign(num_classes, std::vector<double>(hs * ws, 0.0));
  t.y_obj.assign(num_classes, std::vector<double>(hs * ws, 0.0));
  t.w_target.assign(hs * ws, 0.0);
  t.h_target.assign(hs * ws, 0.0);
  t.off_x.assign(hs * ws, 0.0);
  t.off_y.assign(hs * ws, 0.0);

  std::vector<double> best_area(hs * ws, -1.0);  // collision: larger box wins
  for (const SceneObject& o : ann.objects) {
    if (o.cls < 0 || o.cls >= num_classes) throw ValidationError("build_targets: class id out of range");
    double cx_ds = o.cx / stride, cy_ds = o.cy / stride;
    size_t px = (size_t)std::floor(cx_ds), py = (size_t)std::floor(cy_ds);
    if (px >= ws || py >= hs) throw ValidationError("build_targets: object center outside grid");
    size_t flat = py * ws + px;

    double radius = std::max(0.0, std::floor(gaussian_radius(o.h / stride, o.w / stride)));
    double sigma = (2 * radius + 1) / 6.0;
    long r = (long)radius;
    for (long dy = -r; dy <= r; ++dy) {
      for (long dx = -r; dx <= r; ++dx) {
        long y = (long)py + dy, x = (long)px + dx;
        if (y < 0 || y >= (long)hs || x < 0 || x >= (long)ws) continue;
        double v = std::exp(-(double)(dx * dx + dy * dy) / (2 * sigma * sigma));
        double& cell = t.heatmap[o.cls][(size_t)y * ws + (size_t)x];
        cell = std::max(cell, v);
      }
    }
    t.heatmap[o.cls][flat] = 1.0;
    t.y_obj[o.cls][flat] = 1.0;

    double area = o.w * o.h;
    if (area > best_area[flat]) {
      best_area[flat] = area;
      t.w_target[flat] = o.w / stride;
      t.h_target[flat] = o.h / stride;
      t.off_x[flat] = cx_ds - (double)px;
      t.off_y[flat] = cy_ds - (double)py;
      if (std::find(t.obj_pixels.begin(), t.obj_pixels.end(), flat) == t.obj_pixels.end())
        t.obj_pixels.push_back(flat);
    }
  }
  std::sort(t.obj_pixels.begin(), t.obj_pixels.end());
  return t;
}

BatchTargets batch_targets(const std::vector<ImageTargets>& per_image) {
  if (per_image.empty()) throw ValidationError("batch_targets: empty batch");
  const size_t n = per_image.size(), h = per_image[0].h, w = per_image[0].w;
  const size_t nc = per_image[0].heatmap.size();
  BatchTargets b;
  b.batch = n;
  b.h = h;
  b.w = w;
  b.num_classes = nc;
  auto stack = [&](auto field) {
    std::vector<double> d(n * h * w);
    for (size_t i = 0; i < n; ++i) {
      const std::vector<double>& src = field(per_image[i]);
      std::copy(src.begin(), src.end(), d.begin() + i * h * w);
    }
    return make_tensor({n, h, w}, std::move(d), false);
  };
  for (size_t c = 0; c < nc; ++c) {
    b.heatmap.push_back(stack([c](const ImageTargets& t) -> const std::vector<double>& { return t.heatmap[c]; }));
    b.y_obj.push_back(stack([c](const ImageTargets& t) -> const std::vector<double>& { return t.y_obj[c]; }));
  }
  b.w_target = stack([](const ImageTargets& t) -> const std::vector<double>& { return t.w_target; });
  b.h_target = stack([](const ImageTargets& t) -> const std::vector<double>& { return t.h_target; });
  b.off_x = stack([](const ImageTargets& t) -> const std::vector<double>& { return t.off_x; });
  b.off_y = stack([](const ImageTargets& t) -> const std::vector<double>& { return t.off_y; });
  for (const ImageTargets& t : per_image) b.obj_pixels.push_back(t.obj_pixels);
  return b;
}

// ---- tensor files ---------------------------------------------------------

namespace {
void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated tensor file: " + path);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}
}  // namespace

void write_tensor_file(const std::string& path, const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("write_tensor_file: expected rank-3 (C,H,W), got " + shape_str(t.shape()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("EVT1", 4);
  for (size_t i = 0; i < 3; ++i) put_u32(os, (uint32_t)t.dim(i));
  for (double v : t.data()) {
    float f = (float)v;
    static_assert(sizeof(float) == 4);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
  if (!os) throw IoError("write failure: " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("truncated tensor file: " + path);
  if (std::memcmp(magic, "EVT1", 4) != 0) throw IoError("bad magic at offset 0 in " + path);
  Shape shape(3);
  for (size_t i = 0; i < 3; ++i) shape[i] = get_u32(is, path);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) {
    uint32_t bits = get_u32(is, path);
    float f;
    std::memcpy(&f, &bits, 4);
    v = (double)f;
  }
  return make_tensor(shape, std::move(data), false);
}

// ---- split IO -------------------------------------------------------------

namespace {

json object_to_json(const SceneObject& o) {
  return json{{"cls", o.cls}, {"cx", o.cx}, {"cy", o.cy}, {"w", o.w}, {"h", o.h}};
}

SceneObject object_from_json(const json& j) {
  SceneObject o;
  o.cls = j.at("cls").get<int>();
  o.cx = j.at("cx").get<double>();
  o.cy = j.at("cy").get<double>();
  o.w = j.at("w").get<double>();
  o.h = j.at("h").get<double>();
  return o;
}

}  // namespace

void write_split(const std::string& dir, const std::vector<Sample>& samples, uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  json images = json::array();
  for (const Sample& s : samples) {
    std::string fname = "img_" + std::to_string(s.id) + ".evt";
    write_tensor_file(dir + "/" + fname, s.image);
    json ann = json::array(), ood = json::array();
    for (const SceneObject& o : s.ann.objects) ann.push_back(object_to_json(o));
    for (const SceneObject& o : s.ann.ood_objects) ood.push_back(object_to_json(o));
    images.push_back({{"id", s.id}, {"tensor_file", fname}, {"annotations", ann}, {"ood_objects", ood}});
  }
  json manifest = {{"generator_version", kGeneratorVersion}, {"seed", seed}, {"images", images}};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << manifest.dump(1) << "\n";
}

DatasetSplit load_split(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw IoError("cannot open manifest: " + dir + "/manifest.json");
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir + ": " + e.what());
  }
  DatasetSplit split;
  split.generator_version = manifest.at("generator_version").get<int>();
  split.seed = manifest.at("seed").get<uint64_t>();
  for (const json& entry : manifest.at("images")) {
    Sample s;
    s.id = entry.at("id").get<int>();
    s.image = read_tensor_file(dir + "/" + entry.at("tensor_file").get<std::string>());
    s.ann.id = s.id;
    for (const json& j : entry.at("annotations")) s.ann.objects.push_back(object_from_json(j));
    for (const json& j : entry.at("ood_objects")) s.ann.ood_objects.push_back(object_from_json(j));
    split.samples.push_back(std::move(s));
  }
  return split;
}

void generate_dataset(const std::string& out_dir, int n_train, int n_val, double ood_frac,
                      uint64_t seed, const SynthConfig& cfg) {
  if (n_train < 0 || n_val < 0) throw ValidationError("generate_dataset: negative split size");
  if (ood_frac < 0.0 || ood_frac > 1.0) throw ValidationError("generate_dataset: ood_frac must be in [0,1]");
  auto make_samples = [&](int count, uint64_t split_tag, int n_ood) {
    std::vector<Sample> samples;
    for (int i = 0; i < count; ++i) {
      uint64_t s = Rng::mix(seed, Rng::mix(split_tag, (uint64_t)i));
      bool ood = i < n_ood;
      auto [img, ann] = render_scene(s, ood, cfg);
      Sample sample;
      sample.id = i;
      sample.image = img;
      sample.ann = ann;
      sample.ann.id = i;
      samples.push_back(std::move(sample));
    }
    return samples;
  };
  write_split(out_dir + "/train", make_samples(n_train, 1, 0), seed);
  write_split(out_dir + "/val", make_samples(n_val, 2, (int)std::llround(ood_frac * n_val)), seed);
}

}  // namespace evcn
