// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "geneo.hpp"
#include "temp_dir.hpp"

#ifndef GENEO_CLI_PATH
#error "GENEO_CLI_PATH must point at the geneo executable"
#endif

using namespace geneo;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string("'") + GENEO_CLI_PATH + "' " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

/// "TP a  FP b  FN c  TN d" from the line starting with `prefix`.
Confusion parse_counts(const std::string& out, const std::string& prefix) {
  const std::regex re(prefix + R"(\s+TP (\d+)  FP (\d+)  FN (\d+)  TN (\d+))");
  std::smatch m;
  for (const auto& l : lines(out)) {
    if (std::regex_search(l, m, re) && m.position(0) == 0) {
      return {std::stoull(m[1]), std::stoull(m[2]), std::stoull(m[3]), std::stoull(m[4])};
    }
  }
  ADD_FAILURE() << "no '" << prefix << "' counts in:\n" << out;
  return {};
}

double parse_number_after(const std::string& out, const std::string& key) {
  const auto pos = out.find(key);
  if (pos == std::string::npos) {
    ADD_FAILURE() << "missing '" << key << "' in:\n" << out;
    return 0.0;
  }
  return std::stod(out.substr(pos + key.size()));
}

bool same(const Confusion& a, const Confusion& b) {
  return a.tp == b.tp && a.fp == b.fp && a.fn == b.fn && a.tn == b.tn;
}

// Small dataset shared by most tests.
void small_dataset(const fs::path& dir, std::size_t scenes = 12) {
  const CliRun r = run("synth --scenes " + std::to_string(scenes) + " --splits 0.5,0.25,0.25 --out " + q(dir));
  ASSERT_EQ(r.code, 0) << r.out;
}

}  // namespace

TEST(Cli, HelpListsFlagsWithProtocolDefaults) {
  const CliRun t = run("train --help");
  ASSERT_EQ(t.code, 0);
  for (const char* s : {"--epochs UINT [50]", "--batch UINT [8]", "--lr FLOAT [0.001]", "--alpha FLOAT [5]",
                        "--epsilon FLOAT [0.1]", "--rho-l FLOAT [5]", "--rho-t FLOAT [5]",
                        "--grid TEXT [64,64,64]", "--kernel TEXT [9,9,9]", "--threads UINT [0]", "--tversky",
                        "--config", "--seed UINT [1]", "--csv"}) {
    EXPECT_NE(t.out.find(s), std::string::npos) << s;
  }
  for (const char* sub : {"synth", "train", "predict", "eval", "gradcheck", "inspect", "ablate", "match"}) {
    const CliRun h = run(std::string(sub) + " --help");
    EXPECT_EQ(h.code, 0) << sub;
    EXPECT_NE(h.out.find("--config"), std::string::npos) << sub;
    EXPECT_NE(h.out.find("--threads UINT [0]"), std::string::npos) << sub;
  }
  EXPECT_EQ(run("gradcheck --help").out.find("corrupt"), std::string::npos);
}

TEST(Cli, UnknownFlagOrSubcommandIsConfigError) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --no-such-flag").code, 2);
  EXPECT_EQ(run("train --epochs many").code, 2);
  EXPECT_EQ(run("eval --checkpoint x --level voxels").code, 2);
}

TEST(Cli, SynthSameSeedIdenticalOutputs) {
  TempDir a, b;
  ASSERT_EQ(run("synth --scenes 10 --seed 7 --out " + q(a.path())).code, 0);
  ASSERT_EQ(run("synth --scenes 10 --seed 7 --out " + q(b.path())).code, 0);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (const auto& e : load_manifest(a / "manifest.json").scenes) EXPECT_EQ(slurp(a / e.file), slurp(b / e.file));
  TempDir c;
  ASSERT_EQ(run("synth --scenes 10 --seed 8 --out " + q(c.path())).code, 0);
  EXPECT_NE(slurp(a / "scene_0000.gpc"), slurp(c / "scene_0000.gpc"));
}

TEST(Cli, SynthWithoutTowers) {
  TempDir d;
  const CliRun r = run("synth --scenes 4 --towers 0 --out " + q(d.path()));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("tower fraction 0.000000"), std::string::npos) << r.out;
}

TEST(Cli, SynthSummaryMatchesRecount) {
  TempDir d;
  const CliRun r = run("synth --scenes 10 --noise 0.3 --out " + q(d.path()));
  ASSERT_EQ(r.code, 0) << r.out;
  const Manifest m = load_manifest(d / "manifest.json");
  std::array<double, 4> count{};
  double total = 0;
  for (const auto& e : m.scenes) {
    const PointCloud c = load_pointcloud(d / e.file);
    total += static_cast<double>(c.size());
    for (Label l : c.labels) count[l] += 1;
  }
  EXPECT_NEAR(parse_number_after(r.out, "ground "), count[kGroundLabel] / total, 5e-7);
  EXPECT_NEAR(parse_number_after(r.out, "  tower "), count[kTowerLabel] / total, 5e-7);
  EXPECT_NEAR(parse_number_after(r.out, "power_line "), count[kPowerLineLabel] / total, 5e-7);
  EXPECT_NEAR(parse_number_after(r.out, "vegetation "), count[kVegetationLabel] / total, 5e-7);
  EXPECT_EQ(parse_number_after(r.out, "points "), total);
  EXPECT_NE(r.out.find("(train 2, val 1, test 7)"), std::string::npos);
}

TEST(Cli, SynthErrors) {
  TempDir d;
  EXPECT_EQ(run("synth --splits 0.5,0.5,0.5 --out " + q(d.path())).code, 2);
  std::ofstream(d / "file") << "x";
  EXPECT_EQ(run("synth --scenes 2 --out " + q(d / "file" / "sub")).code, 3);
  std::ofstream(d / "bad.cfg") << "scenes 3\n";
  const CliRun r = run("synth --config " + q(d / "bad.cfg") + " --out " + q(d / "o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.cfg:1"), std::string::npos) << r.out;
  EXPECT_EQ(run("synth --config " + q(d / "absent.cfg")).code, 2);
}

TEST(Cli, DataDirFromEnvironment) {
  TempDir d;
  const std::string env = "GENEO_DATA_DIR=" + q(d / "ds") + " ";
  const std::string cmd = env + "'" + GENEO_CLI_PATH + "' synth --scenes 4 --splits 0.5,0.25,0.25 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(d / "ds" / "manifest.json"));
  const std::string train = env + "'" + GENEO_CLI_PATH + "' train --epochs 0 --grid 16 --out " + q(d / "m.json") +
                            " > /dev/null 2>&1";
  EXPECT_EQ(std::system(train.c_str()), 0);
}

TEST(Cli, TrainZeroEpochsWritesInitialization) {
  TempDir d;
  small_dataset(d / "ds");
  const CliRun r = run("train --data " + q(d / "ds") + " --epochs 0 --seed 5 --grid 16 --out " + q(d / "m.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(load_checkpoint(d / "m.json"), init_params(5, 3, {9, 9, 9}));
  EXPECT_EQ(lines(slurp(d / "m_history.csv")).size(), 1u);
}

TEST(Cli, TrainIsReproducible) {
  TempDir d;
  small_dataset(d / "ds");
  const std::string base = "train --data " + q(d / "ds") + " --grid 32 --epochs 3 --batch 4 --lr 0.01 --seed 2";
  ASSERT_EQ(run(base + " --out " + q(d / "a.json")).code, 0);
  const CliRun r = run(base + " --out " + q(d / "b.json") + " --csv " + q(d / "h.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(fnv1a_hex(slurp(d / "a.json")), fnv1a_hex(slurp(d / "b.json")));
  const auto h = lines(slurp(d / "h.csv"));
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0], "epoch,train_loss,val_loss,val_precision,val_recall,val_iou,tau,wall_seconds");
  EXPECT_EQ(h[1].substr(0, 2), "1,");
  EXPECT_NE(r.out.find("best epoch"), std::string::npos);
  // the reported validation IoU is the best history row
  double best = 0.0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    std::stringstream ss(h[i]);
    std::string f;
    for (int k = 0; k < 6; ++k) std::getline(ss, f, ',');
    best = std::max(best, std::stod(f));
  }
  EXPECT_NEAR(parse_number_after(r.out, "IoU "), best, 1e-4);
}

TEST(Cli, ConfigFileEntriesAreOverriddenByFlags) {
  TempDir d;
  small_dataset(d / "ds");
  std::ofstream(d / "run.cfg") << "# zero-epoch run\nepochs = 0\nseed = 3\ngrid = 16\ntversky =\n";
  const std::string base = "train --data " + q(d / "ds") + " --config " + q(d / "run.cfg");
  ASSERT_EQ(run(base + " --out " + q(d / "a.json")).code, 0);
  EXPECT_EQ(load_checkpoint(d / "a.json"), init_params(3, 3, {9, 9, 9}));
  ASSERT_EQ(run(base + " --seed 4 --out " + q(d / "b.json")).code, 0);
  EXPECT_EQ(load_checkpoint(d / "b.json"), init_params(4, 3, {9, 9, 9}));
  std::ofstream(d / "typo.cfg") << "epochz = 0\n";
  EXPECT_EQ(run("train --data " + q(d / "ds") + " --config " + q(d / "typo.cfg")).code, 2);
}

TEST(Cli, TrainMissingDataIsIoError) {
  TempDir d;
  EXPECT_EQ(run("train --data " + q(d / "nothing") + " --out " + q(d / "m.json")).code, 3);
}

TEST(Cli, PredictTauZeroMarksEveryOccupiedVoxel) {
  TempDir d;
  small_dataset(d / "ds");
  ASSERT_EQ(run("train --data " + q(d / "ds") + " --epochs 0 --out " + q(d / "m.json")).code, 0);
  const CliRun r = run("predict --checkpoint " + q(d / "m.json") + " --input " + q(d / "ds" / "scene_0011.gpc") +
                    " --grid 32 --tau 0 --out " + q(d / "p.ply"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Confusion v = parse_counts(r.out, "voxels");
  EXPECT_EQ(v.fn, 0u);
  EXPECT_EQ(v.tn, 0u);
  EXPECT_EQ(v.tp + v.fp, static_cast<std::uint64_t>(parse_number_after(r.out, "points, ")));
}

TEST(Cli, PredictStatsEqualLibraryAndPly) {
  TempDir d;
  small_dataset(d / "ds");
  ModelParams p = init_params(1, 3, {9, 9, 9});
  p.lambda_cy = 0.6;
  p.lambda_ar = 0.3;
  p.tau = 0.05;
  save_checkpoint(p, d / "m.json");
  const fs::path cloud = d / "ds" / "scene_0008.gpc";
  const CliRun r = run("predict --checkpoint " + q(d / "m.json") + " --input " + q(cloud) + " --grid 48 --out " +
                    q(d / "p.ply"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Scene s = make_scene("s", load_pointcloud(cloud), {48, 48, 48});
  const Model model(p);
  const Confusion v = scene_confusion(model, s, EvalLevel::Voxel);
  const Confusion pt = scene_confusion(model, s, EvalLevel::Point);
  EXPECT_TRUE(same(parse_counts(r.out, "voxels"), v)) << r.out;
  EXPECT_TRUE(same(parse_counts(r.out, "points"), pt)) << r.out;

  std::array<std::uint64_t, 4> colors{};
  const auto ply = lines(slurp(d / "p.ply"));
  ASSERT_GT(ply.size(), s.cloud.size());
  for (std::size_t i = ply.size() - s.cloud.size(); i < ply.size(); ++i) {
    const auto& l = ply[i];
    if (l.ends_with(" 0 200 0")) ++colors[0];
    else if (l.ends_with(" 220 0 0")) ++colors[1];
    else if (l.ends_with(" 240 160 0")) ++colors[2];
    else if (l.ends_with(" 150 150 150")) ++colors[3];
  }
  EXPECT_EQ(colors, (std::array<std::uint64_t, 4>{pt.tp, pt.fp, pt.fn, pt.tn}));
}

TEST(Cli, PredictAtHigherResolutionWithRediscretizedKernel) {
  TempDir d;
  small_dataset(d / "ds", 4);
  ModelParams p = init_params(1, 3, {9, 9, 9});
  p.lambda_cy = 0.5;
  p.lambda_ar = 0.4;
  save_checkpoint(p, d / "m.json");
  const CliRun r = run("predict --checkpoint " + q(d / "m.json") + " --input " + q(d / "ds" / "scene_0003.gpc") +
                    " --grid 128 --kernel 12,5,5 --out " + q(d / "p.ply"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("at 128x128x128, kernel 12x5x5"), std::string::npos) << r.out;
}

TEST(Cli, PredictErrors) {
  TempDir d;
  small_dataset(d / "ds", 2);
  std::ofstream(d / "bad.json") << R"({"format_version": 1})";
  EXPECT_EQ(run("predict --checkpoint " + q(d / "bad.json") + " --input " + q(d / "ds" / "scene_0000.gpc")).code, 5);
  save_checkpoint(ModelParams{}, d / "m.json");
  EXPECT_EQ(run("predict --checkpoint " + q(d / "m.json") + " --input " + q(d / "none.xyzl")).code, 3);
  EXPECT_EQ(run("predict --checkpoint " + q(d / "absent.json") + " --input " + q(d / "ds" / "scene_0000.gpc")).code, 3);
  EXPECT_EQ(run("predict --checkpoint " + q(d / "m.json") + " --input " + q(d / "ds" / "scene_0000.gpc") +
                " --kernel 1,5,5 --out " + q(d / "p.ply")).code, 2);
}

TEST(Cli, EvalCsvAndAggregateMatchLibrary) {
  TempDir d;
  small_dataset(d / "ds");
  ModelParams p = init_params(2, 3, {9, 9, 9});
  p.lambda_cy = 0.5;
  p.lambda_ar = 0.3;
  p.tau = 0.05;
  save_checkpoint(p, d / "m.json");
  const CliRun r = run("eval --checkpoint " + q(d / "m.json") + " --data " + q(d / "ds") + " --grid 32 --csv " +
                    q(d / "e.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto test = load_split(load_manifest(d / "ds" / "manifest.json"), Split::Test, {32, 32, 32});
  const auto rows = lines(slurp(d / "e.csv"));
  EXPECT_EQ(rows.size(), 1 + test.size() + 1);  // header, scenes, aggregate
  EXPECT_EQ(rows.back().substr(0, 4), "all,");
  const Metrics m = evaluate(p, test, EvalLevel::Voxel);
  EXPECT_TRUE(same(parse_counts(r.out, " "), m.counts)) << r.out;
  EXPECT_NEAR(parse_number_after(r.out, "average precision "), average_precision(Model(p), test), 1e-6);
}

TEST(Cli, EvalPointLevelDiffersOnlyByQuantization) {
  TempDir d;
  small_dataset(d / "ds");
  ModelParams p = init_params(3, 3, {9, 9, 9});
  p.lambda_cy = 0.5;
  p.lambda_ar = 0.4;
  p.tau = 0.04;
  save_checkpoint(p, d / "m.json");
  const std::string base = "eval --checkpoint " + q(d / "m.json") + " --data " + q(d / "ds") + " --grid 32";
  const CliRun pr = run(base + " --level point");
  ASSERT_EQ(pr.code, 0) << pr.out;
  // oracle: every point inherits the prediction of its voxel
  const Model model(p);
  Confusion c;
  for (const auto& s : load_split(load_manifest(d / "ds" / "manifest.json"), Split::Test, {32, 32, 32})) {
    const auto mask = model.predict(s.vox.grid.values);
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
      const auto v = voxel_coords(s.vox.grid, s.cloud.points[i]);
      const bool pred = mask(v[0], v[1], v[2]) != 0, truth = s.cloud.labels[i] == kTowerLabel;
      c.tp += pred && truth;
      c.fp += pred && !truth;
      c.fn += !pred && truth;
      c.tn += !pred && !truth;
    }
  }
  EXPECT_TRUE(same(parse_counts(pr.out, " "), c)) << pr.out;
}

TEST(Cli, EvalPerfectCheckpointScoresOne) {
  TempDir d;
  // scenes made only of tower points: tau = 0 predicts exactly the labels
  Manifest m;
  m.root = d.path();
  m.splits = {0.0, 0.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    PointCloud c;
    for (int i = 0; i < 200; ++i) c.push_back({float(i % 7) + k, float(i / 7 % 5), float(i / 35)}, kTowerLabel);
    const std::string name = "scene_" + std::to_string(k) + ".gpc";
    save_pointcloud(c, d / name, CloudFormat::Binary);
    m.scenes.push_back({name, Split::Test, 0, config_hash(m.config), 0.0});
  }
  std::ofstream(d / "manifest.json") << manifest_json(m).dump(2);
  ModelParams p;
  p.tau = 0.0;
  save_checkpoint(p, d / "m.json");
  for (const char* level : {"voxel", "point"}) {
    const CliRun r = run("eval --checkpoint " + q(d / "m.json") + " --data " + q(d.path()) + " --grid 16 --level " + level);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("precision 1.0000  recall 1.0000  IoU 1.0000\n  average"), std::string::npos) << r.out;
  }
}

TEST(Cli, EvalErrors) {
  TempDir d;
  small_dataset(d / "ds", 4);
  save_checkpoint(ModelParams{}, d / "m.json");
  EXPECT_EQ(run("eval --checkpoint " + q(d / "m.json") + " --data " + q(d / "none")).code, 3);
  auto j = checkpoint_json(ModelParams{});
  j["tau"] = 3.0;
  std::ofstream(d / "bad.json") << j.dump();
  EXPECT_EQ(run("eval --checkpoint " + q(d / "bad.json") + " --data " + q(d / "ds")).code, 5);
}

TEST(Cli, GradcheckPassesAndWorstErrorRecomputes) {
  TempDir d;
  const CliRun r = run("gradcheck --csv " + q(d / "g.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos);
  const std::regex re(R"(worst relative error (\S+): (\S+) at seed (\d+) \(analytic (\S+), numeric (\S+), step)");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, re)) << r.out;
  const double reported = std::stod(m[1]);
  const double a = std::stod(m[4]), n = std::stod(m[5]);
  EXPECT_NEAR(reported, std::abs(a - n) / std::max(std::abs(a), std::abs(n)), 1e-6 * reported + 1e-15);
  EXPECT_LE(reported, 1e-3);
  // and it is the largest relative error in the CSV
  const auto rows = lines(slurp(d / "g.csv"));
  ASSERT_EQ(rows.size(), 1u + 220u);
  double worst = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> f;
    std::stringstream ss(rows[i]);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 9u);
    if (f[6] == "0") worst = std::max(worst, std::stod(f[5]));
  }
  EXPECT_NEAR(worst, reported, 1e-6 * reported);
}

TEST(Cli, GradcheckCorruptedGradientExitsSix) {
  const CliRun r = run("gradcheck --configs 3 --corrupt-param negsphere.omega");
  EXPECT_EQ(r.code, 6);
  EXPECT_NE(r.out.find("gradcheck failed for: negsphere.omega"), std::string::npos) << r.out;
  EXPECT_EQ(run("gradcheck --configs 1 --corrupt-param nothing").code, 2);
}

TEST(Cli, InspectFreshInit) {
  const CliRun r = run("inspect --init --seed 4");
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = r.out.find("[trainable]", pos)) != std::string::npos; ++pos) ++n;
  EXPECT_EQ(n, 11u);
  EXPECT_NE(r.out.find("not trainable"), std::string::npos);
  EXPECT_NE(r.out.find("lambda_ns*"), std::string::npos);
  EXPECT_NE(r.out.find("%"), std::string::npos);
  EXPECT_EQ(run("inspect").code, 2);
  EXPECT_EQ(run("inspect --init --checkpoint x.json").code, 2);
  EXPECT_EQ(run("inspect --checkpoint /nonexistent/m.json").code, 3);
}

TEST(Cli, AblateEmitsSevenRows) {
  TempDir d;
  small_dataset(d / "ds");
  const CliRun r = run("ablate --data " + q(d / "ds") + " --grid 16 --epochs 1 --batch 4 --csv " + q(d / "a.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = lines(slurp(d / "a.csv"));
  ASSERT_EQ(rows.size(), 8u);
  std::string ids;
  for (std::size_t i = 1; i < rows.size(); ++i) ids += rows[i][0];
  EXPECT_EQ(ids, "ABCDEFG");
  EXPECT_EQ(rows[5].substr(0, 8), "E,1,1,1,");
  EXPECT_NE(r.out.find("best row "), std::string::npos);
}

// Paired run on the default dataset with the default training protocol.
TEST(Cli, TemplateMatchingApBelowTrainedModel) {
  TempDir d;
  ASSERT_EQ(run("synth --out " + q(d / "ds")).code, 0);
  const CliRun t = run("train -q --data " + q(d / "ds") + " --out " + q(d / "m.json"));
  ASSERT_EQ(t.code, 0) << t.out;
  const CliRun e = run("eval --checkpoint " + q(d / "m.json") + " --data " + q(d / "ds"));
  const CliRun m = run("match --data " + q(d / "ds"));
  ASSERT_EQ(e.code, 0) << e.out;
  ASSERT_EQ(m.code, 0) << m.out;
  const double model_ap = parse_number_after(e.out, "average precision ");
  const double template_ap = parse_number_after(m.out, "template matching average precision ");
  std::cout << "model AP " << model_ap << ", template AP " << template_ap << "\n";
  EXPECT_LE(template_ap, model_ap);
  EXPECT_EQ(run("match --data " + q(d / "ds") + " --radius 0").code, 2);
}
