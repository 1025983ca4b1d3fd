/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "stmunet/config.hpp"
#include "stmunet/data.hpp"
#include "stmunet/gradcheck.hpp"
#include "stmunet/model.hpp"
#include "stmunet/train.hpp"

namespace fs = std::filesystem;
using namespace stmunet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;
constexpr double kReferenceParams = 6.12e6;

// Mirrors each line to stdout and to the log file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    const int r1 = a_->sputc(static_cast<char>(c));
    const int r2 = b_->sputc(static_cast<char>(c));
    return (r1 == EOF || r2 == EOF) ? EOF : c;
  }
  int sync() override {
    const int r1 = a_->pubsync();
    const int r2 = b_->pubsync();
    return (r1 == 0 && r2 == 0) ? 0 : -1;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

struct FlagOverrides {
  std::vector<std::string> sets;
  std::optional<std::string> config_file;
  std::optional<std::string> data;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  std::optional<int> size;
  std::optional<std::string> channels;
  std::optional<uint64_t> seed;
  std::optional<int> window;
  std::optional<int> shift_size;
  std::optional<int> n;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
};

void add_common_options(CLI::App* sub, FlagOverrides& fo) {
  sub->add_option("--config", fo.config_file, "config file (key = value lines)");
  sub->add_option("--set", fo.sets, "dotted-path override, e.g. model.window=8")
      ->take_all();
  sub->add_option("--data", fo.data, "dataset: 'synth' or a directory with images/ and masks/");
  sub->add_option("--epochs", fo.epochs, "training epochs");
  sub->add_option("--lr", fo.lr, "learning rate");
  sub->add_option("--batch", fo.batch, "training batch size");
  sub->add_option("--size", fo.size, "square input size");
  sub->add_option("--channels", fo.channels, "5 comma-separated channel widths");
  sub->add_option("--seed", fo.seed, "master seed (model, train, data)");
  sub->add_option("--window", fo.window, "attention window side");
  sub->add_option("--shift-size", fo.shift_size, "axial shift group count");
  sub->add_option("--n", fo.n, "synthetic sample count");
  sub->add_option("--out", fo.out_dir, "output directory");
  sub->add_option("--format", fo.format, "report format: text or tsv");
}

KitConfig resolve_config(const FlagOverrides& fo) {
  KitConfig cfg;
  if (fo.config_file) apply_config_file(cfg, *fo.config_file);
  for (const std::string& kv : fo.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    }
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (fo.data) cfg.data.source = *fo.data;
  if (fo.epochs) cfg.train.epochs = *fo.epochs;
  if (fo.lr) cfg.train.lr = *fo.lr;
  if (fo.batch) cfg.train.batch_size_train = *fo.batch;
  if (fo.size) cfg.model.input_h = cfg.model.input_w = *fo.size;
  if (fo.channels) apply_config_value(cfg, "model.channels", *fo.channels);
  if (fo.window) cfg.model.window = *fo.window;
  if (fo.shift_size) cfg.model.shift_size = *fo.shift_size;
  if (fo.n) cfg.data.synth_n = *fo.n;
  if (fo.out_dir) cfg.out.dir = *fo.out_dir;
  if (fo.format) apply_config_value(cfg, "out.format", *fo.format);
  if (fo.seed) {
    cfg.model.seed = *fo.seed;
    cfg.train.seed = *fo.seed;
    cfg.data.synth_seed = *fo.seed;
    cfg.data.split_seed = *fo.seed;
  }
  return cfg;
}

std::vector<SegmentationSample> load_dataset(const KitConfig& cfg) {
  if (cfg.data.source == "synth") {
    return synth_blobs(cfg.data.synth_n, cfg.model.input_h, cfg.data.synth_seed);
  }
  const fs::path base(cfg.data.source);
  return load_folder((base / "images").string(), (base / "masks").string(), cfg.model.input_h,
                     cfg.model.input_w);
}

void echo_config(std::ostream& os, const KitConfig& cfg) {
  os << "lr=" << cfg.train.lr << " batch=" << cfg.train.batch_size_train
     << " epochs=" << cfg.train.epochs << " eval_batch=" << cfg.train.batch_size_eval
     << " optimizer=adam loss=" << cfg.train.loss_kind << "\n";
  os << "model.channels=";
  for (size_t i = 0; i < cfg.model.channels.size(); ++i) {
    os << (i ? "," : "") << cfg.model.channels[i];
  }
  os << " model.size=" << cfg.model.input_h << "x" << cfg.model.input_w
     << " model.window=" << cfg.model.window << " model.shift_size=" << cfg.model.shift_size
     << " model.expand_ratio=" << cfg.model.expand_ratio
     << " swin=" << (cfg.model.use_swin_skips ? "on" : "off")
     << " pconv=" << (cfg.model.use_parallel_conv ? "on" : "off")
     << " seed=" << cfg.model.seed << "\n";
  os << "data.source=" << cfg.data.source << " split_ratio=" << cfg.data.split_ratio << "\n";
}

struct AblateRow {
  std::string label;
  int64_t params;
  double miou, mdice;
};

int run_train(const KitConfig& cfg) {
  fs::create_directories(cfg.out.dir);
  const std::string log_path = (fs::path(cfg.out.dir) / "train.log").string();
  std::ofstream file(log_path);
  if (!file) throw std::runtime_error("cannot write log file '" + log_path + "'");
  TeeBuf buf(std::cout.rdbuf(), file.rdbuf());
  std::ostream log(&buf);

  log << "stmunet train\n";
  echo_config(log, cfg);
  log.flush();

  const auto samples = load_dataset(cfg);
  const DatasetSplit sp = split(samples, cfg.data.split_ratio, cfg.data.split_seed);
  const auto train_set = select_samples(samples, sp.train);
  const auto val_set = select_samples(samples, sp.val);
  log << "samples=" << samples.size() << " train=" << train_set.size()
      << " val=" << val_set.size() << "\n";
  log << "split_checksum=" << checksum_hex(split_checksum(sp)) << "\n";

  Model<float> model = build_model<float>(cfg.model);
  log << "params=" << param_count(model) << "\n";
  log << "init_checksum=" << checksum_hex(param_checksum(model)) << "\n";
  log.flush();

  const TrainResult result = train(model, train_set, val_set, cfg.train, &log);
  if (!result.best_params.empty()) apply_param_snapshot(model, result.best_params);
  const std::string ckpt = (fs::path(cfg.out.dir) / "best.stmu").string();
  save_checkpoint(model, ckpt);
  log << "final_checksum=" << checksum_hex(param_checksum(model)) << "\n";
  log << "best_epoch=" << result.best_epoch << " best_miou=" << result.best_miou << "\n";
  log << "checkpoint=" << ckpt << "\n";
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const KitConfig& flags_cfg) {
  Model<float> model = load_checkpoint(checkpoint);
  KitConfig cfg = flags_cfg;
  cfg.model = model.cfg;  // dataset sizing follows the checkpoint
  const auto samples = load_dataset(cfg);
  const EvalReport report = evaluate(model, samples);
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  if (cfg.out.format == "tsv") {
    for (const auto& e : report.per_image) {
      os << e.id << "\t" << e.iou << "\t" << e.dice << "\n";
    }
  } else {
    for (const auto& e : report.per_image) {
      os << e.id << " iou=" << e.iou << " dice=" << e.dice << "\n";
    }
    os << "mIoU=" << report.miou << " mDice=" << report.mdice << "\n";
  }
  std::cout << os.str();
  return kExitOk;
}

int run_ablate(const KitConfig& base) {
  const auto samples = load_dataset(base);
  const DatasetSplit sp = split(samples, base.data.split_ratio, base.data.split_seed);
  const auto train_set = select_samples(samples, sp.train);
  const auto val_set = select_samples(samples, sp.val);
  std::cout << "stmunet ablate (seed=" << base.model.seed << ")\n";
  std::cout << "split_checksum=" << checksum_hex(split_checksum(sp)) << "\n";

  const std::array<std::pair<bool, bool>, 3> grid{{{false, false}, {true, false}, {true, true}}};
  std::vector<AblateRow> rows;
  for (const auto& [use_swin, use_pconv] : grid) {
    KitConfig cfg = base;
    cfg.model.use_swin_skips = use_swin;
    cfg.model.use_parallel_conv = use_pconv;
    Model<float> model = build_model<float>(cfg.model);
    const TrainResult result = train(model, train_set, val_set, cfg.train, nullptr);
    apply_param_snapshot(model, result.best_params);
    const EvalReport report = evaluate(model, val_set);
    AblateRow row;
    row.label = std::string(use_swin ? "+swin" : "-swin") + " " +
                (use_pconv ? "+pconv" : "-pconv");
    row.params = param_count(model);
    row.miou = report.miou;
    row.mdice = report.mdice;
    rows.push_back(row);
    std::cout << "done " << row.label << "\n";
  }
  std::cout << "config          params      miou    mdice\n";
  std::ostringstream os;
  os << std::setprecision(4) << std::fixed;
  for (const auto& r : rows) {
    os << r.label << "  " << std::setw(9) << r.params << "  " << r.miou << "  " << r.mdice
       << "\n";
  }
  std::cout << os.str();
  return kExitOk;
}

int run_gradcheck() {
  const auto suite = standard_gradcheck_suite();
  bool all_ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < suite.size(); ++i) {
    const double err = suite[i].run(1000 + i);
    const bool ok = err < suite[i].tol;
    all_ok = all_ok && ok;
    std::cout << "gradcheck " << suite[i].name << " max_rel_err=" << std::scientific
              << std::setprecision(3) << err << " tol=" << suite[i].tol
              << (ok ? " ok" : " FAIL") << std::defaultfloat << "\n";
  }
  const auto dt =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  std::cout << "gradcheck total_ms=" << dt.count() << (all_ok ? " ok" : " FAIL") << "\n";
  return all_ok ? kExitOk : kExitCheckFailed;
}

int run_params(const KitConfig& cfg) {
  Model<float> model = build_model<float>(cfg.model);
  const int64_t n = param_count(model);
  const double dev = 100.0 * (static_cast<double>(n) - kReferenceParams) / kReferenceParams;
  std::cout << "params=" << n << "\n";
  std::ostringstream os;
  os << std::showpos << std::setprecision(2) << std::fixed << dev;
  std::cout << "reference=6120000 deviation=" << os.str() << "%\n";
  return kExitOk;
}

int run_synth(const KitConfig& cfg) {
  const int size = cfg.model.input_h;
  const auto samples = synth_blobs(cfg.data.synth_n, size, cfg.data.synth_seed);
  write_dataset(samples, cfg.out.dir);
  std::cout << "wrote " << samples.size() << " samples (" << size << "x" << size << ") to "
            << cfg.out.dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stmunet: desk-scale segmentation kit (train / eval / ablate / gradcheck / "
               "params / synth)"};
  app.require_subcommand(1);

  FlagOverrides fo_train, fo_eval, fo_ablate, fo_params, fo_synth;
  std::string eval_checkpoint;

  CLI::App* sub_train = app.add_subcommand("train", "train a model and keep the best checkpoint");
  add_common_options(sub_train, fo_train);
  CLI::App* sub_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  sub_eval->add_option("--checkpoint", eval_checkpoint, "path to a .stmu checkpoint")
      ->required();
  add_common_options(sub_eval, fo_eval);
  CLI::App* sub_ablate =
      app.add_subcommand("ablate", "train the three ablation configurations on one split");
  add_common_options(sub_ablate, fo_ablate);
  CLI::App* sub_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  CLI::App* sub_params = app.add_subcommand("params", "report the parameter count");
  add_common_options(sub_params, fo_params);
  CLI::App* sub_synth = app.add_subcommand("synth", "write a synthetic blob dataset");
  add_common_options(sub_synth, fo_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sub_train->parsed()) return run_train(resolve_config(fo_train));
    if (sub_eval->parsed()) return run_eval(eval_checkpoint, resolve_config(fo_eval));
    if (sub_ablate->parsed()) return run_ablate(resolve_config(fo_ablate));
    if (sub_gradcheck->parsed()) return run_gradcheck();
    if (sub_params->parsed()) return run_params(resolve_config(fo_params));
    if (sub_synth->parsed()) return run_synth(resolve_config(fo_synth));
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
