#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "evcn/config.hpp"
#include "evcn/data.hpp"
#include "evcn/errors.hpp"
#include "evcn/gradcheck.hpp"
#include "evcn/metrics.hpp"
#include "evcn/model.hpp"
#include "evcn/tensor.hpp"
#include "evcn/trainer.hpp"

namespace {

// exit codes: 0 ok, 1 validation error, 2 I/O error, 3 numeric abort
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

evcn::RunConfig load_config(const std::string& path) {
  if (path.empty()) return evcn::RunConfig{};
  return evcn::RunConfig::from_file(path);
}

int run_synth(const std::string& out, int n_train, int n_val, double ood_frac, uint64_t seed) {
  if (n_train < 0 || n_val < 0) throw evcn::ValidationError("synth: counts must be non-negative");
  if (ood_frac < 0.0 || ood_frac > 1.0) throw evcn::ValidationError("synth: --ood-frac must be in [0,1]");
  evcn::generate_dataset(out, n_train, n_val, ood_frac, seed);
  std::cout << "wrote " << n_train << " train and " << n_val << " val images to " << out << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir) {
  evcn::RunConfig cfg = load_config(config_path);
  evcn::DatasetSplit split = evcn::load_split(data_dir + "/train");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw evcn::IoError("cannot create output directory: " + out_dir);
  evcn::DetectorModel model(cfg.model);
  evcn::TrainResult result = evcn::train(split, model, cfg.train, cfg.cls_loss, cfg.reg_loss);
  model.save_checkpoint(out_dir + "/model.evc");
  evcn::write_train_log_csv(out_dir + "/train_log.csv", result.log);
  {
    std::ofstream os(out_dir + "/config.json", std::ios::binary);
    if (!os) throw evcn::IoError("cannot write " + out_dir + "/config.json");
    os << cfg.to_json_text();
  }
  if (!result.log.empty())
    std::cout << "final epoch mean loss " << result.log.back().mean_loss.total << "\n";
  std::cout << "checkpoint: " << out_dir << "/model.evc\n";
  return 0;
}

int run_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_dir, const std::string& report_path) {
  evcn::RunConfig cfg = load_config(config_path);
  evcn::DatasetSplit split = evcn::load_split(data_dir + "/val");
  evcn::DetectorModel model(cfg.model);
  model.load_checkpoint(checkpoint);
  evcn::EvalReport report = evcn::evaluate(model, split, cfg.eval);
  std::string json = evcn::report_to_json(report, iso_timestamp());
  if (report_path.empty()) {
    std::cout << json;
  } else {
    std::ofstream os(report_path, std::ios::binary);
    if (!os) throw evcn::IoError("cannot write report: " + report_path);
    os << json;
    std::cout << "mAP@0.5 " << report.map << "  ECE " << report.ece << "  report: " << report_path << "\n";
  }
  return 0;
}

int run_calibration(const std::string& config_path, const std::string& checkpoint,
                    const std::string& data_dir, int bins, const std::string& out_path) {
  evcn::RunConfig cfg = load_config(config_path);
  if (bins > 0) cfg.eval.bins = bins;
  evcn::DatasetSplit split = evcn::load_split(data_dir + "/val");
  evcn::DetectorModel model(cfg.model);
  model.load_checkpoint(checkpoint);
  evcn::EvalReport report = evcn::evaluate(model, split, cfg.eval);
  evcn::write_calibration_csv(out_path, report.calibration);
  std::cout << "ECE " << report.ece << "  table: " << out_path << "\n";
  return 0;
}

int run_gradcheck(int points, uint64_t seed) {
  auto results = evcn::run_gradient_suite(points, seed);
  double worst = 0.0;
  for (const auto& r : results) {
    std::cout << r.name << ": max relative error " << r.max_err << "\n";
    worst = std::max(worst, r.max_err);
  }
  std::cout << "gradcheck: " << points << " points per loss, overall max " << worst << "\n";
  if (worst > 1e-3) {
    std::cerr << "gradcheck failed tolerance 1e-3\n";
    return kExitNumeric;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evidential center-point detector on synthetic shapes"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "data";
  int n_train = 400, n_val = 100;
  double ood_frac = 0.3;
  uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--n-train", n_train, "training images");
  synth->add_option("--n-val", n_val, "validation images");
  synth->add_option("--ood-frac", ood_frac, "fraction of val images with an OOD ring");
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* train_cmd = app.add_subcommand("train", "train a detector");
  std::string train_config, train_data = "data", train_out = "run";
  train_cmd->add_option("--config", train_config, "JSON run config (defaults when omitted)");
  train_cmd->add_option("--data", train_data, "dataset directory (with train/ and val/)");
  train_cmd->add_option("--out", train_out, "output directory for checkpoint and log");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_config, eval_ckpt, eval_data = "data", eval_report;
  eval_cmd->add_option("--config", eval_config, "JSON run config");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory");
  eval_cmd->add_option("--report", eval_report, "report JSON path (stdout when omitted)");

  auto* cal_cmd = app.add_subcommand("calibration", "write the confidence calibration table");
  std::string cal_config, cal_ckpt, cal_data = "data", cal_out = "calibration.csv";
  int cal_bins = 0;
  cal_cmd->add_option("--config", cal_config, "JSON run config");
  cal_cmd->add_option("--checkpoint", cal_ckpt, "checkpoint file")->required();
  cal_cmd->add_option("--data", cal_data, "dataset directory");
  cal_cmd->add_option("--bins", cal_bins, "bin count override");
  cal_cmd->add_option("--out", cal_out, "CSV output path");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference sanity check");
  int grad_points = 100;
  uint64_t grad_seed = 1;
  grad_cmd->add_option("--points", grad_points, "random evaluation points");
  grad_cmd->add_option("--seed", grad_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_out, n_train, n_val, ood_frac, synth_seed);
    if (*train_cmd) return run_train(train_config, train_data, train_out);
    if (*eval_cmd) return run_eval(eval_config, eval_ckpt, eval_data, eval_report);
    if (*cal_cmd) return run_calibration(cal_config, cal_ckpt, cal_data, cal_bins, cal_out);
    if (*grad_cmd) return run_gradcheck(grad_points, grad_seed);
  } catch (const evcn::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const evcn::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const evcn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const evcn::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
