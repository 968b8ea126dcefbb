#pragma once

#include <string>
#include <vector>

#include "evcn/losses.hpp"
#include "evcn/tensor.hpp"

namespace evcn {

// Object classes of the synthetic corpus. The ring shape is deliberately
// absent from this enum: it only appears as an out-of-distribution object.
enum ShapeClass : int { kBoxVehicle = 0, kDiscPerson = 1, kTriangleCycle = 2 };
constexpr int kNumClasses = 3;

struct SceneObject {
  int cls = 0;
  double cx = 0, cy = 0;  // center, input pixels
  double w = 0, h = 0;    // box extents, input pixels
};

struct SceneAnnotation {
  int id = 0;
  std::vector<SceneObject> objects;      // labeled, in-distribution
  std::vector<SceneObject> ood_objects;  // rings, annotated for OOD evaluation only
};

struct SynthConfig {
  int image_size = 128;
  int stride = 4;
  int max_objects = 6;
  // sized so the backbone receptive field spans a whole object from its center
  double min_dim = 15.0, max_dim = 20.0;
  // per-class size factor: vehicles draw larger than cycles and persons
  double class_size[3] = {1.0, 0.8, 0.9};
  // class mixture 3:2:1, mimicking car/pedestrian/cyclist frequency
  double class_probs[3] = {3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0};
  // fill intensities over the 0.2-mean noise background: the rarest-fill
  // disc gets the bright extreme, the frequent box absorbs the middle slot
  double class_intensity[3] = {0.75, 0.95, 0.58};
  double ring_intensity = 0.35;
};

// Deterministic scene generator: Gaussian-noise background (mean 0.2,
// sd 0.05, clipped to [0,1]) with filled shapes at per-class intensity.
// With ood set, the last drawn shape becomes a ring and at least one object
// is drawn. Identical seeds give bit-identical output.
std::pair<Tensor, SceneAnnotation> render_scene(uint64_t seed, bool ood,
                                                const SynthConfig& cfg = SynthConfig{});

// Target grids for one annotated image at output stride r: CenterNet-style
// Gaussian heatmaps (min-overlap-0.7 radius, sigma = (2r+1)/6, max-merge),
// one-hot objectness, width/height in downsampled units at center pixels,
// and sub-pixel offsets. Two same-pixel objects keep the larger box.
struct ImageTargets {
  std::vector<std::vector<double>> heatmap;  // per class, h*w
  std::vector<std::vector<double>> y_obj;
  std::vector<double> w_target, h_target, off_x, off_y;
  std::vector<size_t> obj_pixels;  // flat, deduplicated
  size_t h = 0, w = 0;
};

ImageTargets build_targets(const SceneAnnotation& ann, int stride, int image_size,
                           int num_classes = kNumClasses);

// CornerNet/CenterNet gaussian radius for the min-IoU overlap rule.
double gaussian_radius(double height, double width, double min_overlap = 0.7);

// Assembles per-image targets into the batched constant tensors the loss
// consumes.
BatchTargets batch_targets(const std::vector<ImageTargets>& per_image);

// ---- dataset on disk ------------------------------------------------------

// Raw tensor file: magic "EVT1", u32 LE extents (C,H,W), f32 LE payload.
void write_tensor_file(const std::string& path, const Tensor& t);  // rank-3 (C,H,W)
Tensor read_tensor_file(const std::string& path);

struct Sample {
  int id = 0;
  Tensor image;  // (1, H, W)
  SceneAnnotation ann;
};

struct DatasetSplit {
  std::vector<Sample> samples;
  uint64_t seed = 0;
  int generator_version = 0;
};

// Writes a split directory: manifest.json plus one EVT1 file per image.
void write_split(const std::string& dir, const std::vector<Sample>& samples, uint64_t seed);
DatasetSplit load_split(const std::string& dir);

// Deterministic corpus generation. OOD images (rings present) are assigned
// to the first round(ood_frac * n_val) validation indices; the train split
// never contains rings.
void generate_dataset(const std::string& out_dir, int n_train, int n_val, double ood_frac,
                      uint64_t seed, const SynthConfig& cfg = SynthConfig{});

constexpr int kGeneratorVersion = 1;

}  // namespace evcn
