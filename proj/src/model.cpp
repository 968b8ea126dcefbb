#include "evcn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace evcn {

namespace {

// Kaiming normal, fan-in mode, leaky-relu gain.
Tensor kaiming_conv(Rng& rng, size_t co, size_t ci, size_t k, double slope) {
  double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  double sd = gain / std::sqrt((double)(ci * k * k));
  std::vector<double> w(co * ci * k * k);
  for (double& v : w) v = rng.normal(0.0, sd);
  return make_tensor({co, ci, k, k}, std::move(w), true);
}

}  // namespace

DetectorModel::DetectorModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.backbone_channels.size() != 4) throw ValidationError("model: backbone needs 4 conv blocks");
  if (cfg.image_size % cfg.stride != 0) throw ValidationError("model: stride must divide image size");
  Rng rng(cfg.init_seed);
  auto add_conv = [&](const std::string& name, size_t co, size_t ci, size_t k) {
    params_.push_back({name + ".weight", kaiming_conv(rng, co, ci, k, cfg_.lrelu_slope)});
    params_.push_back({name + ".bias", Tensor::zeros({co}, true)});
  };
  size_t ci = 1;
  for (size_t b = 0; b < 4; ++b) {
    add_conv("backbone.conv" + std::to_string(b + 1), (size_t)cfg.backbone_channels[b], ci, 3);
    ci = (size_t)cfg.backbone_channels[b];
  }
  const size_t hc = (size_t)cfg.head_channels;
  const size_t pc = (size_t)cfg.obj_proj_channels;
  add_conv("obj.proj", (size_t)cfg.num_classes * pc, ci, 1);
  add_conv("obj.mlp1", hc, pc, 1);
  add_conv("obj.mlp2", hc, hc, 1);
  add_conv("obj.out", 2, hc, 1);
  add_conv("wh.conv1", hc, ci, 1);
  add_conv("wh.conv2", hc, hc, 1);
  add_conv("wh.out", 8, hc, 1);
  add_conv("off.conv1", hc, ci, 1);
  add_conv("off.out", 2, hc, 1);
  // prior bias on the object-presence logit to keep early focal/evidential
  // training off the saturated regime
  param("obj.out.bias").data()[1] = -2.19;
}

Tensor DetectorModel::param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ValidationError("model: unknown parameter " + name);
}

size_t DetectorModel::param_count() const {
  size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void DetectorModel::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Tensor DetectorModel::conv_block(const Tensor& x, const std::string& name, size_t stride) const {
  return leaky_relu(conv2d(x, param(name + ".weight"), param(name + ".bias"), stride), cfg_.lrelu_slope);
}

HeadOutputs DetectorModel::forward(const Tensor& images, bool train, Rng& rng) const {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != (size_t)cfg_.image_size ||
      images.dim(3) != (size_t)cfg_.image_size)
    throw ValidationError("model forward: expected (N,1," + std::to_string(cfg_.image_size) + "," +
                          std::to_string(cfg_.image_size) + ") input, got " + shape_str(images.shape()));

  Tensor f = conv_block(images, "backbone.conv1", 1);
  f = conv_block(f, "backbone.conv2", 2);
  f = conv_block(f, "backbone.conv3", 2);
  f = conv_block(f, "backbone.conv4", 1);

  const size_t n = images.dim(0);
  const size_t hs = f.dim(2), ws = f.dim(3);
  const size_t nc = (size_t)cfg_.num_classes;

  // objectness: per-class feature slice, then a pointwise stack shared
  // across classes (class dimension folded into the batch)
  Tensor cls_map = conv2d(f, param("obj.proj.weight"), param("obj.proj.bias"), 1);
  Tensor stacked = reshape(cls_map, {n * nc, (size_t)cfg_.obj_proj_channels, hs, ws});
  Tensor h1 = leaky_relu(conv2d(stacked, param("obj.mlp1.weight"), param("obj.mlp1.bias"), 1), cfg_.lrelu_slope);
  h1 = dropout(h1, cfg_.dropout_p, train, rng);
  Tensor h2 = leaky_relu(conv2d(h1, param("obj.mlp2.weight"), param("obj.mlp2.bias"), 1), cfg_.lrelu_slope);
  Tensor obj = conv2d(h2, param("obj.out.weight"), param("obj.out.bias"), 1);
  HeadOutputs out;
  out.obj_logits = reshape(obj, {n, nc * 2, hs, ws});

  Tensor w1 = leaky_relu(conv2d(f, param("wh.conv1.weight"), param("wh.conv1.bias"), 1), cfg_.lrelu_slope);
  if (cfg_.dropout_wh) w1 = dropout(w1, cfg_.dropout_p, train, rng);
  Tensor w2 = leaky_relu(conv2d(w1, param("wh.conv2.weight"), param("wh.conv2.bias"), 1), cfg_.lrelu_slope);
  out.wh_raw = conv2d(w2, param("wh.out.weight"), param("wh.out.bias"), 1);

  Tensor o1 = leaky_relu(conv2d(f, param("off.conv1.weight"), param("off.conv1.bias"), 1), cfg_.lrelu_slope);
  out.off_raw = conv2d(o1, param("off.out.weight"), param("off.out.bias"), 1);
  return out;
}

HeadOutputs DetectorModel::forward(const Tensor& images) const {
  Rng rng(0);
  return forward(images, false, rng);
}

// ---- checkpoints ----------------------------------------------------------

namespace {
void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}
uint16_t get_u16(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated checkpoint: " + path);
  return (uint16_t)((uint16_t)b[0] | ((uint16_t)b[1] << 8));
}
}  // namespace

void DetectorModel::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("EVC1", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, (uint32_t)params_.size());
  for (const auto& [name, t] : params_) {
    put_u16(os, (uint16_t)name.size());
    os.write(name.data(), (std::streamsize)name.size());
    put_u32(os, (uint32_t)t.rank());
    for (size_t i = 0; i < t.rank(); ++i) put_u32(os, (uint32_t)t.dim(i));
    for (double v : t.data()) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u32(os, (uint32_t)(bits & 0xffffffffull));
      put_u32(os, (uint32_t)(bits >> 32));
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

void DetectorModel::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("truncated checkpoint: " + path);
  if (std::memcmp(magic, "EVC1", 4) != 0) throw IoError("bad checkpoint magic at offset 0 in " + path);
  uint32_t version = get_u32(is, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  uint32_t count = get_u32(is, path);

  std::vector<std::string> found;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = get_u16(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint: " + path);
    found.push_back(name);
    uint32_t rank = get_u32(is, path);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = get_u32(is, path);

    Tensor* target = nullptr;
    for (auto& [n, t] : params_)
      if (n == name) target = &t;
    if (!target) throw IoError("checkpoint tensor " + name + " is not a model parameter (" + path + ")");
    if (target->shape() != shape)
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
                    shape_str(target->shape()));
    for (double& v : target->data()) {
      uint64_t lo = get_u32(is, path), hi = get_u32(is, path);
      uint64_t bits = lo | (hi << 32);
      std::memcpy(&v, &bits, 8);
    }
  }
  if (found.size() != params_.size()) {
    std::ostringstream os;
    os << "checkpoint parameter set mismatch in " << path << "; expected:";
    for (const auto& [n, t] : params_) os << " " << n;
    os << "; found:";
    for (const auto& n : found) os << " " << n;
    throw IoError(os.str());
  }
}

}  // namespace evcn
