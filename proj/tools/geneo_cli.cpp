// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: dataset synthesis, training, prediction,
// evaluation, gradient checking, inspection, ablation and the
// template-matching baseline.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geneo.hpp"

using namespace geneo;
namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumerical = 4,
  kExitCheckpoint = 5,
  kExitVerification = 6,
};

/// "Z,Y,X" or a single edge "N" for a cube.
Shape3 parse_shape(const std::string& text, const char* flag) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size() || n == 0) {
      throw ConfigError(std::string(flag) + ": expected positive integers, got '" + text + "'");
    }
    v.push_back(n);
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() != 3) throw ConfigError(std::string(flag) + ": expected Z,Y,X or a single edge, got '" + text + "'");
  return {v[0], v[1], v[2]};
}

SplitFractions parse_splits(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("--splits: malformed value '" + text + "'");
    }
  }
  if (v.size() != 3) throw ConfigError("--splits: expected TRAIN,VAL,TEST");
  SplitFractions f{v[0], v[1], v[2]};
  f.validate();
  return f;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("GENEO_DATA_DIR"); env && *env) return env;
  return "data";
}

Manifest open_manifest(const fs::path& data) {
  return load_manifest(fs::is_directory(data) ? data / "manifest.json" : data);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string counts_line(const Confusion& c) {
  const Metrics m = metrics_from(c);
  return fmt("TP %llu  FP %llu  FN %llu  TN %llu  precision %.4f  recall %.4f  IoU %.4f",
             static_cast<unsigned long long>(c.tp), static_cast<unsigned long long>(c.fp),
             static_cast<unsigned long long>(c.fn), static_cast<unsigned long long>(c.tn),
             m.precision, m.recall, m.iou);
}

// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::size_t threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value file applied before the command-line flags");
  sub->add_option("--threads", c.threads, "worker threads (0 = auto)");
}

struct ModelFlags {
  std::string grid = "64,64,64";
  std::string kernel = "9,9,9";
  std::size_t epochs = 50;
  std::size_t batch = 8;
  double lr = 0.001;
  double alpha = 5.0;
  double epsilon = 0.1;
  double rho_l = 5.0;
  double rho_t = 5.0;
  std::string tversky;
  CLI::Option* tversky_opt = nullptr;
  std::string criterion = "iou";
  double criterion_beta = 1.0;
  bool quiet = false;
};

void add_training_flags(CLI::App* sub, ModelFlags& f) {
  sub->add_option("--grid", f.grid, "voxel grid Z,Y,X");
  sub->add_option("--kernel", f.kernel, "kernel Z,Y,X");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--batch", f.batch, "scenes per batch");
  sub->add_option("--lr", f.lr, "RMSProp learning rate");
  sub->add_option("--alpha", f.alpha, "extra loss weight on tower voxels");
  sub->add_option("--epsilon", f.epsilon, "loss weight floor");
  sub->add_option("--rho-l", f.rho_l, "negativity penalty on mixing weights");
  sub->add_option("--rho-t", f.rho_t, "negativity penalty on shape parameters");
  f.tversky_opt = sub->add_option("--tversky", f.tversky, "add the Tversky term, optionally with its mix weight (default 1)")
                      ->expected(0, 1);
  sub->add_option("--criterion", f.criterion, "threshold tuning criterion")
      ->check(CLI::IsMember({"iou", "precision", "fbeta"}));
  sub->add_option("--criterion-beta", f.criterion_beta, "beta of the fbeta criterion");
  sub->add_flag("-q,--quiet", f.quiet, "no per-epoch progress");
}

TrainConfig train_config(const ModelFlags& f) {
  TrainConfig c;
  c.epochs = f.epochs;
  c.batch = f.batch;
  c.learning_rate = f.lr;
  c.kernel_shape = parse_shape(f.kernel, "--kernel");
  c.loss.alpha = f.alpha;
  c.loss.epsilon = f.epsilon;
  c.loss.rho_l = f.rho_l;
  c.loss.rho_t = f.rho_t;
  if (f.tversky_opt && f.tversky_opt->count() > 0) {
    c.loss.tversky_enabled = true;
    if (!f.tversky.empty()) {
      try {
        c.loss.tversky_mix = std::stod(f.tversky);
      } catch (const std::exception&) {
        throw ConfigError("--tversky: malformed mix weight '" + f.tversky + "'");
      }
    }
  }
  c.criterion = f.criterion == "precision" ? ThresholdCriterion::Precision
                : f.criterion == "fbeta"   ? ThresholdCriterion::FBeta
                                           : ThresholdCriterion::IoU;
  c.criterion_beta = f.criterion_beta;
  c.validate();
  return c;
}

void print_epoch(const EpochRecord& e, std::size_t epochs) {
  std::cout << fmt("epoch %zu/%zu  train loss %.6f  val loss %.6f  precision %.4f  recall %.4f  IoU %.4f  tau %.2f  %.1fs",
                   e.epoch, epochs, e.train_loss, e.val_loss, e.val.precision, e.val.recall, e.val.iou,
                   e.tau, e.wall_seconds)
            << std::endl;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t scenes = 200;
  std::string splits = "0.2,0.1,0.7";
  std::uint64_t seed = 0;
  SceneConfig scene;
};

int cmd_synth(const SynthArgs& a) {
  SceneConfig cfg = a.scene;
  cfg.seed = a.seed;
  const fs::path out = a.out.empty() ? default_data_dir() : fs::path(a.out);
  const Manifest m = build_dataset(cfg, a.scenes, parse_splits(a.splits), out);

  // recount from the written files
  std::array<std::size_t, 3> per_split{0, 0, 0};
  std::array<std::uint64_t, 256> labels{};
  std::uint64_t points = 0;
  for (const auto& e : m.scenes) {
    ++per_split[static_cast<std::size_t>(e.split)];
    const PointCloud c = load_pointcloud(m.root / e.file, CloudFormat::Binary);
    points += c.size();
    for (Label l : c.labels) ++labels[l];
  }
  std::cout << fmt("wrote %zu scenes to %s (train %zu, val %zu, test %zu)\n", m.scenes.size(),
                   out.string().c_str(), per_split[0], per_split[1], per_split[2]);
  std::cout << "points " << points << "\n";
  const auto frac = [&](Label l) { return points ? static_cast<double>(labels[l]) / static_cast<double>(points) : 0.0; };
  std::cout << fmt("class fractions: ground %.6f  tower %.6f  power_line %.6f  vegetation %.6f\n",
                   frac(kGroundLabel), frac(kTowerLabel), frac(kPowerLineLabel), frac(kVegetationLabel));
  std::cout << fmt("tower fraction %.6f\n", frac(kTowerLabel));
  return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out = "model.json";
  std::string csv;
  std::uint64_t seed = 1;
  ModelFlags model;
};

int cmd_train(const TrainArgs& a) {
  const TrainConfig cfg = train_config(a.model);
  const Shape3 grid = parse_shape(a.model.grid, "--grid");
  const Manifest m = open_manifest(a.data.empty() ? default_data_dir() : fs::path(a.data));
  const auto train_set = load_split(m, Split::Train, grid);
  const auto val_set = load_split(m, Split::Val, grid);
  std::cout << fmt("training on %zu scenes, validating on %zu, grid %s, kernel %s\n", train_set.size(),
                   val_set.size(), grid.str().c_str(), cfg.kernel_shape.str().c_str())
            << std::flush;
  const auto r = train(train_set, val_set, cfg, a.seed, [&](const EpochRecord& e) {
    if (!a.model.quiet) print_epoch(e, cfg.epochs);
  });

  save_checkpoint(r.params, a.out);
  const fs::path out(a.out);
  const fs::path csv = a.csv.empty() ? out.parent_path() / (out.stem().string() + "_history.csv") : fs::path(a.csv);
  std::string h = "epoch,train_loss,val_loss,val_precision,val_recall,val_iou,tau,wall_seconds\n";
  for (const auto& e : r.history) {
    h += fmt("%zu,%.9g,%.9g,%.6f,%.6f,%.6f,%.2f,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.val.precision,
             e.val.recall, e.val.iou, e.tau, e.wall_seconds);
  }
  write_text(csv, h);

  if (r.nonnegativity_violated) std::cerr << "warning: a trained parameter ended below zero\n";
  if (r.best_epoch > 0) {
    const auto& b = r.history[r.best_epoch - 1];
    std::cout << fmt("best epoch %zu: validation precision %.4f  recall %.4f  IoU %.4f at tau %.2f\n",
                     r.best_epoch, b.val.precision, b.val.recall, b.val.iou, b.tau);
  } else {
    std::cout << "no epochs run; checkpoint holds the initialization\n";
  }
  std::cout << "checkpoint " << a.out << "\nhistory " << csv.string() << "\n";
  return kExitOk;
}

// --- predict / eval ----------------------------------------------------------

struct ModelArgs {
  std::string checkpoint;
  std::string grid = "64,64,64";
  std::string kernel;  // empty: the checkpoint's kernel
  std::optional<double> tau;
};

void add_model_args(CLI::App* sub, ModelArgs& a) {
  sub->add_option("--checkpoint", a.checkpoint, "checkpoint JSON")->required();
  sub->add_option("--grid", a.grid, "voxel grid Z,Y,X");
  sub->add_option("--kernel", a.kernel, "rediscretize the kernels to Z,Y,X (default: the checkpoint's)");
  sub->add_option("--tau", a.tau, "detection threshold (default: the checkpoint's)");
}

ModelParams model_params(const ModelArgs& a) {
  ModelParams p = load_checkpoint(a.checkpoint);
  if (!a.kernel.empty()) {
    const Shape3 k = parse_shape(a.kernel, "--kernel");
    if (!(k == p.kernel_shape)) p = rediscretize(p, k);
  }
  if (a.tau) {
    if (!(*a.tau >= 0.0 && *a.tau <= 1.0)) throw ConfigError("--tau must lie in [0, 1]");
    p.tau = *a.tau;
  }
  return p;
}

struct PredictArgs {
  ModelArgs model;
  std::string input;
  std::string out = "prediction.ply";
};

int cmd_predict(const PredictArgs& a) {
  const ModelParams p = model_params(a.model);
  const Shape3 grid = parse_shape(a.model.grid, "--grid");
  const Model model(p);
  const Scene s = make_scene(fs::path(a.input).filename().string(), load_pointcloud(a.input), grid);
  const MaskGrid mask = model.predict(s.vox.grid.values);
  const auto pred = devoxelize(mask, s.vox.map);
  std::vector<std::uint8_t> truth(s.cloud.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = s.cloud.labels[i] == s.target_label;
  save_colored_cloud(s.cloud, pred, truth, a.out);

  std::size_t occupied = 0, positive = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (s.vox.grid.values[i] == 0.0) continue;
    ++occupied;
    positive += mask[i];
  }
  std::cout << fmt("%s: %zu points, %zu occupied voxels at %s, kernel %s, tau %.4f\n", s.name.c_str(),
                   s.cloud.size(), occupied, grid.str().c_str(), p.kernel_shape.str().c_str(), p.tau);
  std::cout << fmt("predicted towers: %zu voxels, %zu points\n", positive,
                   static_cast<std::size_t>(std::count(pred.begin(), pred.end(), 1)));
  std::cout << "voxels  " << counts_line(scene_confusion(model, s, EvalLevel::Voxel)) << "\n";
  std::cout << "points  " << counts_line(scene_confusion(model, s, EvalLevel::Point)) << "\n";
  std::cout << "wrote " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  ModelArgs model;
  std::string data;
  std::string split = "test";
  std::string level = "voxel";
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  const ModelParams p = model_params(a.model);
  const Shape3 grid = parse_shape(a.model.grid, "--grid");
  const Manifest m = open_manifest(a.data.empty() ? default_data_dir() : fs::path(a.data));
  const Split split = parse_split(a.split);
  const EvalLevel level = a.level == "point" ? EvalLevel::Point : EvalLevel::Voxel;
  const Model model(p);

  std::string csv = "scene,tp,fp,fn,tn,precision,recall,iou\n";
  const auto csv_row = [&](const std::string& name, const Confusion& c) {
    const Metrics mt = metrics_from(c);
    csv += fmt("%s,%llu,%llu,%llu,%llu,%.6f,%.6f,%.6f\n", name.c_str(), static_cast<unsigned long long>(c.tp),
               static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn),
               static_cast<unsigned long long>(c.tn), mt.precision, mt.recall, mt.iou);
  };
  Confusion total;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::size_t n = 0;
  bool finite = true;
  for_each_manifest_scene(m, split, grid, [&](const Scene& s) {
    const auto prob = model.forward(s.vox.grid.values);
    const MaskGrid mask = Model::threshold(prob, p.tau);
    Confusion c;
    if (level == EvalLevel::Voxel) {
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (s.vox.grid.values[i] == 0.0) continue;
        const bool pr = mask[i], t = s.vox.labels[i];
        c.tp += pr && t;
        c.fp += pr && !t;
        c.fn += !pr && t;
        c.tn += !pr && !t;
      }
    } else {
      const auto pred = devoxelize(mask, s.vox.map);
      std::vector<std::uint8_t> truth(s.cloud.size());
      for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = s.cloud.labels[i] == s.target_label;
      c = confusion(pred, truth);
    }
    for (std::size_t i = 0; i < prob.size(); ++i) {
      finite = finite && std::isfinite(prob[i]);
      if (s.vox.grid.values[i] == 0.0) continue;
      scores.push_back(prob[i]);
      labels.push_back(s.vox.labels[i]);
    }
    total += c;
    ++n;
    std::cout << fmt("%-18s ", s.name.c_str()) << counts_line(c) << "\n";
    csv_row(s.name, c);
  });
  if (n == 0) throw ConfigError("split '" + a.split + "' holds no scenes");
  if (!finite) throw NumericalError("non-finite probabilities");
  csv_row("all", total);
  std::cout << fmt("all %zu scenes (%s level, %s split, grid %s, kernel %s, tau %.4f)\n", n, a.level.c_str(),
                   a.split.c_str(), grid.str().c_str(), p.kernel_shape.str().c_str(), p.tau);
  std::cout << "  " << counts_line(total) << "\n";
  std::cout << fmt("  average precision %.6f over %zu occupied voxels\n", average_precision(scores, labels),
                   scores.size());
  if (!a.csv.empty()) write_text(a.csv, csv);
  return kExitOk;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t configs = 20;
  std::string grid = "16,16,16";
  std::string kernel = "9,9,9";
  double step = 1e-4;
  std::string csv;
  std::string corrupt;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions opt;
  opt.seed = a.seed;
  opt.configurations = a.configs;
  opt.grid_shape = parse_shape(a.grid, "--grid");
  opt.kernel_shape = parse_shape(a.kernel, "--kernel");
  if (!(a.step > 0.0)) throw ConfigError("--step must be positive");
  opt.step = a.step;
  if (!a.corrupt.empty()) opt.corrupt = a.corrupt;
  const GradCheckReport report = run_gradcheck(opt);

  std::string csv = "seed,parameter,analytic,numeric,step,error,absolute,kinks,ok\n";
  const ParamCheck* worst = nullptr;
  std::uint64_t worst_seed = 0;
  for (const auto& c : report.cases) {
    const ParamCheck* cw = nullptr;
    for (const auto& p : c.params) {
      csv += fmt("%llu,%s,%.17g,%.17g,%.3g,%.6e,%d,%zu,%d\n", static_cast<unsigned long long>(c.seed),
                 p.name.c_str(), p.analytic, p.numeric, p.step, p.error, p.absolute ? 1 : 0, p.kinks, p.ok ? 1 : 0);
      if (p.absolute) continue;
      if (!cw || p.error > cw->error) cw = &p;
      if (!worst || p.error > worst->error) {
        worst = &p;
        worst_seed = c.seed;
      }
    }
    std::cout << fmt("seed %3llu  tversky %-3s  %s  worst relative %.3e (%s)\n",
                     static_cast<unsigned long long>(c.seed), c.tversky ? "on" : "off", c.ok() ? "ok  " : "FAIL",
                     cw ? cw->error : 0.0, cw ? cw->name.c_str() : "-");
  }
  const std::size_t components = report.cases.empty() ? 0 : report.cases.size() * report.cases[0].params.size();
  std::cout << fmt("components re-checked at a smaller step (kink crossed): %zu of %zu\n",
                   report.kinked_components(), components);
  if (worst) {
    std::cout << fmt("worst relative error %.6e: %s at seed %llu (analytic %.17g, numeric %.17g, step %.3g)\n",
                     worst->error, worst->name.c_str(), static_cast<unsigned long long>(worst_seed),
                     worst->analytic, worst->numeric, worst->step);
  }
  if (!a.csv.empty()) write_text(a.csv, csv);
  if (report.ok()) {
    std::cout << "gradcheck passed\n";
    return kExitOk;
  }
  for (const auto& c : report.cases)
    for (const auto& p : c.params)
      if (!p.ok)
        std::cout << fmt("mismatch: %s at seed %llu: analytic %.9g, numeric %.9g, error %.3e\n", p.name.c_str(),
                         static_cast<unsigned long long>(c.seed), p.analytic, p.numeric, p.error);
  std::string names;
  for (const auto& n : report.failing_params()) names += (names.empty() ? "" : ", ") + n;
  std::cerr << "gradcheck failed for: " << names << "\n";
  return kExitVerification;
}

// --- inspect -----------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint;
  bool init = false;
  std::uint64_t seed = 1;
  std::string kernel = "9,9,9";
};

int cmd_inspect(const InspectArgs& a) {
  if (a.checkpoint.empty() == !a.init) throw ConfigError("inspect: give exactly one of --checkpoint or --init");
  const ModelParams p = a.init ? init_params(a.seed, 3, parse_shape(a.kernel, "--kernel")) : load_checkpoint(a.checkpoint);
  std::cout << inspect(p);
  return kExitOk;
}

// --- ablate ------------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::uint64_t seed = 1;
  std::string csv;
  ModelFlags model;
};

int cmd_ablate(const AblateArgs& a) {
  const TrainConfig cfg = train_config(a.model);
  const Shape3 grid = parse_shape(a.model.grid, "--grid");
  const Manifest m = open_manifest(a.data.empty() ? default_data_dir() : fs::path(a.data));
  const auto train_set = load_split(m, Split::Train, grid);
  const auto val_set = load_split(m, Split::Val, grid);
  if (!a.model.quiet) {
    std::cout << fmt("ablation over %zu rows, %zu training / %zu validation scenes, seed %llu\n",
                     kAblationRows.size(), train_set.size(), val_set.size(), static_cast<unsigned long long>(a.seed))
              << std::flush;
  }
  const auto rows = run_ablation(train_set, val_set, cfg, a.seed, [&](const AblationResult& r) {
    if (!a.model.quiet) {
      std::cout << fmt("  row %c done: validation IoU %.4f", r.row.id, r.val.iou) << std::endl;
    }
  });
  const std::size_t best = best_row(rows);
  std::string csv = "row,cylinders,arrows,negspheres,parameters,val_precision,val_recall,val_iou,tau,best_epoch\n";
  std::cout << "row  operators             params  precision  recall  IoU     tau\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::cout << fmt("%c%s  %-20s  %6zu  %9.4f  %6.4f  %.4f  %.2f\n", r.row.id, i == best ? "*" : " ",
                     counts_label(r.row.counts).c_str(), r.parameters, r.val.precision, r.val.recall, r.val.iou,
                     r.tau);
    csv += fmt("%c,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.2f,%zu\n", r.row.id, r.row.counts.cylinder,
               r.row.counts.arrow, r.row.counts.negsphere, r.parameters, r.val.precision, r.val.recall, r.val.iou,
               r.tau, r.best_epoch);
  }
  std::cout << fmt("best row %c\n", rows[best].row.id);
  if (!a.csv.empty()) write_text(a.csv, csv);
  return kExitOk;
}

// --- match -------------------------------------------------------------------

struct MatchArgs {
  std::string data;
  std::string split = "test";
  std::string grid = "64,64,64";
  std::optional<double> radius;
  std::size_t depth = 9;
};

int cmd_match(const MatchArgs& a) {
  const Shape3 grid = parse_shape(a.grid, "--grid");
  const Manifest m = open_manifest(a.data.empty() ? default_data_dir() : fs::path(a.data));
  const Split split = parse_split(a.split);
  double radius_m = 0.0;
  if (a.radius) {
    radius_m = *a.radius;
  } else {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& e : m.scenes) {
      if (e.split != split || e.tower_radius_m <= 0.0) continue;
      s += e.tower_radius_m;
      ++n;
    }
    if (n == 0) throw ConfigError("match: no tower radius recorded in the manifest; pass --radius");
    radius_m = s / static_cast<double>(n);
  }
  // horizontal voxel edge averaged over the split
  double edge = 0.0;
  std::size_t n = 0;
  for (const auto& e : m.scenes) {
    if (e.split != split) continue;
    const VoxelGrid g = grid_geometry(load_pointcloud(m.root / e.file, CloudFormat::Binary), grid);
    edge += 0.5 * (g.voxel_size[1] + g.voxel_size[2]);
    ++n;
  }
  if (n == 0) throw ConfigError("split '" + a.split + "' holds no scenes");
  const double radius_v = radius_m / (edge / static_cast<double>(n));
  const TemplateConfig cfg = make_template_config(radius_v, a.depth);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for_each_manifest_scene(m, split, grid, [&](const Scene& s) {
    const auto sc = template_scores(s.vox.grid.values, cfg);
    for (std::size_t i = 0; i < sc.size(); ++i) {
      if (s.vox.grid.values[i] == 0.0) continue;
      scores.push_back(sc[i]);
      labels.push_back(s.vox.labels[i]);
    }
  });
  std::cout << fmt("template radius %.4f m = %.4f voxels, template %s\n", radius_m, radius_v, cfg.shape.str().c_str());
  std::cout << fmt("template matching average precision %.6f over %zu occupied voxels of %zu %s scenes\n",
                   average_precision(scores, labels), scores.size(), n, a.split.c_str());
  return kExitOk;
}

/// Config entries become `--key=value` flags placed right after the
/// subcommand, so flags given on the command line override them.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path || args.empty() || args[0].empty() || args[0][0] == '-') return args;
  std::vector<std::string> injected;
  for (const auto& [key, value] : load_config(*path)) {
    if (key == "config") throw ConfigError(*path + ": nested config files are not supported");
    injected.push_back(value.empty() ? "--" + key : "--" + key + "=" + value);
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tower segmentation in point clouds with geometric operators"};
  app.name("geneo");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  Common common;

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic dataset and its manifest");
  s_synth->add_option("--out", synth.out, "output directory (default: $GENEO_DATA_DIR or ./data)");
  s_synth->add_option("--scenes", synth.scenes, "number of scenes");
  s_synth->add_option("--splits", synth.splits, "train,val,test fractions");
  s_synth->add_option("--seed", synth.seed, "generator seed");
  s_synth->add_option("--towers", synth.scene.tower_count, "towers per scene");
  s_synth->add_option("--tower-fraction", synth.scene.tower_fraction, "target tower share of points (0 = natural)");
  s_synth->add_option("--noise", synth.scene.noise_rate, "share of near-tower points relabelled as tower (train/val only)");
  s_synth->add_option("--noise-radius", synth.scene.noise_radius, "label noise radius in metres");
  s_synth->add_option("--extent", synth.scene.extent_x, "scene side in metres")->each([&](const std::string&) {
    synth.scene.extent_y = synth.scene.extent_x;
  });
  add_common(s_synth, common);

  TrainArgs train_args;
  auto* s_train = app.add_subcommand("train", "train the observer and tune its threshold on validation");
  s_train->add_option("--data", train_args.data, "dataset directory (default: $GENEO_DATA_DIR or ./data)");
  s_train->add_option("--out", train_args.out, "checkpoint path");
  s_train->add_option("--csv", train_args.csv, "history CSV (default: <checkpoint>_history.csv)");
  s_train->add_option("--seed", train_args.seed, "initialization and shuffling seed");
  add_training_flags(s_train, train_args.model);
  add_common(s_train, common);

  PredictArgs predict;
  auto* s_predict = app.add_subcommand("predict", "segment one cloud and write a colored PLY");
  add_model_args(s_predict, predict.model);
  s_predict->add_option("--input", predict.input, "point cloud (.xyzl text or .gpc binary)")->required();
  s_predict->add_option("--out", predict.out, "output PLY");
  add_common(s_predict, common);

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "precision, recall, IoU and average precision on a split");
  add_model_args(s_eval, eval.model);
  s_eval->add_option("--data", eval.data, "dataset directory (default: $GENEO_DATA_DIR or ./data)");
  s_eval->add_option("--split", eval.split, "split to score")->check(CLI::IsMember({"train", "val", "test"}));
  s_eval->add_option("--level", eval.level, "voxel or point metrics")->check(CLI::IsMember({"voxel", "point"}));
  s_eval->add_option("--csv", eval.csv, "per-scene CSV with a final aggregate row");
  add_common(s_eval, common);

  GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  s_gc->add_option("--seed", gc.seed, "first configuration seed");
  s_gc->add_option("--configs", gc.configs, "random configurations");
  s_gc->add_option("--grid", gc.grid, "crop grid Z,Y,X");
  s_gc->add_option("--kernel", gc.kernel, "kernel Z,Y,X");
  s_gc->add_option("--step", gc.step, "finite-difference step");
  s_gc->add_option("--csv", gc.csv, "per-component CSV");
  s_gc->add_option("--corrupt-param", gc.corrupt, "perturb this parameter's analytic gradient")->group("");
  add_common(s_gc, common);

  InspectArgs insp;
  auto* s_insp = app.add_subcommand("inspect", "print the trainable parameters of a checkpoint");
  s_insp->add_option("--checkpoint", insp.checkpoint, "checkpoint JSON");
  s_insp->add_flag("--init", insp.init, "inspect a fresh initialization instead");
  s_insp->add_option("--seed", insp.seed, "seed for --init");
  s_insp->add_option("--kernel", insp.kernel, "kernel Z,Y,X for --init");
  add_common(s_insp, common);

  AblateArgs abl;
  auto* s_abl = app.add_subcommand("ablate", "train the operator-count ablation rows A-G");
  s_abl->add_option("--data", abl.data, "dataset directory (default: $GENEO_DATA_DIR or ./data)");
  s_abl->add_option("--seed", abl.seed, "initialization and shuffling seed");
  s_abl->add_option("--csv", abl.csv, "table as CSV");
  add_training_flags(s_abl, abl.model);
  add_common(s_abl, common);

  MatchArgs match;
  auto* s_match = app.add_subcommand("match", "cylinder template-matching baseline");
  s_match->add_option("--data", match.data, "dataset directory (default: $GENEO_DATA_DIR or ./data)");
  s_match->add_option("--split", match.split, "split to score")->check(CLI::IsMember({"train", "val", "test"}));
  s_match->add_option("--grid", match.grid, "voxel grid Z,Y,X");
  s_match->add_option("--radius", match.radius, "template radius in metres (default: mean tower radius from the manifest)");
  s_match->add_option("--depth", match.depth, "template depth in voxels");
  add_common(s_match, common);

  try {
    std::vector<std::string> args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    set_thread_count(common.threads);
    if (s_synth->parsed()) return cmd_synth(synth);
    if (s_train->parsed()) return cmd_train(train_args);
    if (s_predict->parsed()) return cmd_predict(predict);
    if (s_eval->parsed()) return cmd_eval(eval);
    if (s_gc->parsed()) return cmd_gradcheck(gc);
    if (s_insp->parsed()) return cmd_inspect(insp);
    if (s_abl->parsed()) return cmd_ablate(abl);
    if (s_match->parsed()) return cmd_match(match);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
