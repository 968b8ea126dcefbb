#include "evcn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "evcn/errors.hpp"

using json = nlohmann::json;

namespace evcn {

namespace {

// Pulls a typed value out of obj, leaving unknown keys behind for the final
// sweep. Type mismatches surface as ValidationError with the full key path.
template <typename T>
void take(json& obj, const char* section, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for ") + section + "." + key + ": " + e.what());
  }
  obj.erase(it);
}

void reject_unknown(const json& obj, const char* section) {
  if (obj.empty()) return;
  std::ostringstream os;
  os << "config: unknown key" << (obj.size() > 1 ? "s" : "") << " in " << section << ":";
  for (auto it = obj.begin(); it != obj.end(); ++it) os << " " << it.key();
  throw ValidationError(os.str());
}

json take_section(json& root, const char* name) {
  auto it = root.find(name);
  if (it == root.end()) return json::object();
  if (!it->is_object()) throw ValidationError(std::string("config: section ") + name + " must be an object");
  json section = *it;
  root.erase(it);
  return section;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be an object");

  RunConfig cfg;

  json d = take_section(root, "data");
  take(d, "data", "dir", cfg.data_dir);
  take(d, "data", "stride", cfg.model.stride);
  take(d, "data", "image_size", cfg.model.image_size);
  reject_unknown(d, "data");

  json m = take_section(root, "model");
  take(m, "model", "num_classes", cfg.model.num_classes);
  take(m, "model", "backbone_channels", cfg.model.backbone_channels);
  take(m, "model", "head_channels", cfg.model.head_channels);
  take(m, "model", "obj_proj_channels", cfg.model.obj_proj_channels);
  take(m, "model", "dropout_p", cfg.model.dropout_p);
  take(m, "model", "dropout_wh", cfg.model.dropout_wh);
  take(m, "model", "lrelu_slope", cfg.model.lrelu_slope);
  take(m, "model", "init_seed", cfg.model.init_seed);
  reject_unknown(m, "model");

  json l = take_section(root, "loss");
  take(l, "loss", "lambda_un_cls", cfg.cls_loss.lambda_un_cls);
  take(l, "loss", "n_cls_fraction", cfg.cls_loss.n_cls_fraction);
  take(l, "loss", "zeta", cfg.cls_loss.zeta);
  take(l, "loss", "eta", cfg.cls_loss.eta);
  take(l, "loss", "beta_cb", cfg.cls_loss.beta_cb);
  take(l, "loss", "use_class_balance", cfg.cls_loss.use_class_balance);
  take(l, "loss", "lambda_w", cfg.reg_loss.lambda_w);
  take(l, "loss", "lambda_un_reg", cfg.reg_loss.lambda_un_reg);
  take(l, "loss", "n_w", cfg.reg_loss.n_w);
  take(l, "loss", "n_obj_max", cfg.reg_loss.n_obj_max);
  take(l, "loss", "kappa2", cfg.reg_loss.kappa2);
  reject_unknown(l, "loss");

  json t = take_section(root, "train");
  take(t, "train", "lr0", cfg.train.lr0);
  take(t, "train", "decay_frac1", cfg.train.decay_frac1);
  take(t, "train", "decay_frac2", cfg.train.decay_frac2);
  take(t, "train", "epochs", cfg.train.epochs);
  take(t, "train", "freeze_offset_frac", cfg.train.freeze_offset_frac);
  take(t, "train", "freeze_backbone_too", cfg.train.freeze_backbone_too);
  take(t, "train", "batch", cfg.train.batch);
  take(t, "train", "lambda_cls_max", cfg.train.lambda_cls_max);
  take(t, "train", "lambda_cls_ramp_frac", cfg.train.lambda_cls_ramp_frac);
  take(t, "train", "weight_decay", cfg.train.weight_decay);
  take(t, "train", "seed", cfg.train.seed);
  reject_unknown(t, "train");

  json e = take_section(root, "eval");
  take(e, "eval", "bins", cfg.eval.bins);
  take(e, "eval", "iou_thresh", cfg.eval.iou_thresh);
  take(e, "eval", "score_threshold", cfg.eval.decode.score_threshold);
  take(e, "eval", "max_det", cfg.eval.decode.max_det);
  take(e, "eval", "band_multiplier", cfg.eval.decode.band_multiplier);
  take(e, "eval", "ap_threshold", cfg.eval.ap_threshold);
  reject_unknown(e, "eval");

  reject_unknown(root, "top level");

  if (cfg.model.image_size < cfg.model.stride || cfg.model.image_size % cfg.model.stride != 0)
    throw ValidationError("config: image_size must be a positive multiple of stride");
  if (cfg.train.epochs < 1 || cfg.train.batch < 1)
    throw ValidationError("config: train.epochs and train.batch must be >= 1");
  if (cfg.eval.bins < 1) throw ValidationError("config: eval.bins must be >= 1");
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

std::string RunConfig::to_json_text() const {
  json root = {
      {"data", {{"dir", data_dir}, {"stride", model.stride}, {"image_size", model.image_size}}},
      {"model",
       {{"num_classes", model.num_classes},
        {"backbone_channels", model.backbone_channels},
        {"head_channels", model.head_channels},
        {"obj_proj_channels", model.obj_proj_channels},
        {"dropout_p", model.dropout_p},
        {"dropout_wh", model.dropout_wh},
        {"lrelu_slope", model.lrelu_slope},
        {"init_seed", model.init_seed}}},
      {"loss",
       {{"lambda_un_cls", cls_loss.lambda_un_cls},
        {"n_cls_fraction", cls_loss.n_cls_fraction},
        {"zeta", cls_loss.zeta},
        {"eta", cls_loss.eta},
        {"beta_cb", cls_loss.beta_cb},
        {"use_class_balance", cls_loss.use_class_balance},
        {"lambda_w", reg_loss.lambda_w},
        {"lambda_un_reg", reg_loss.lambda_un_reg},
        {"n_w", reg_loss.n_w},
        {"n_obj_max", reg_loss.n_obj_max},
        {"kappa2", reg_loss.kappa2}}},
      {"train",
       {{"lr0", train.lr0},
        {"decay_frac1", train.decay_frac1},
        {"decay_frac2", train.decay_frac2},
        {"epochs", train.epochs},
        {"freeze_offset_frac", train.freeze_offset_frac},
        {"freeze_backbone_too", train.freeze_backbone_too},
        {"batch", train.batch},
        {"lambda_cls_max", train.lambda_cls_max},
        {"lambda_cls_ramp_frac", train.lambda_cls_ramp_frac},
        {"weight_decay", train.weight_decay},
        {"seed", train.seed}}},
      {"eval",
       {{"bins", eval.bins},
        {"iou_thresh", eval.iou_thresh},
        {"score_threshold", eval.decode.score_threshold},
        {"max_det", eval.decode.max_det},
        {"band_multiplier", eval.decode.band_multiplier},
        {"ap_threshold", eval.ap_threshold}}}};
  return root.dump(2) + "\n";
}

}  // namespace evcn
