// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

// Generates a small synthetic dataset in memory, trains the three-operator
// observer for a few epochs, reports test metrics and saves a checkpoint.

#include <cstdio>

#include "geneo.hpp"

int main(int argc, char** argv) {
  using namespace geneo;
  const std::filesystem::path out = argc > 1 ? argv[1] : "quickstart_model.json";

  SceneConfig scenes;  // 120 m crops with two towers each
  const Shape3 grid{64, 64, 64};
  const GeneratedDataset gen = generate_dataset(scenes, 30, SplitFractions{0.4, 0.2, 0.4}, grid);
  std::printf("train %zu  val %zu  test %zu scenes\n", gen.data.train.size(), gen.data.val.size(),
              gen.data.test.size());

  TrainConfig cfg;
  cfg.epochs = 5;
  const ModelTrainResult r = train(gen.data.train, gen.data.val, cfg, 1, [](const EpochRecord& e) {
    std::printf("epoch %zu  train loss %.5f  val IoU %.4f  tau %.2f\n", e.epoch, e.train_loss, e.val.iou, e.tau);
  });

  const Model model(r.params);
  const Metrics m = evaluate(model, gen.data.test, EvalLevel::Voxel);
  std::printf("test precision %.4f  recall %.4f  IoU %.4f  AP %.4f\n", m.precision, m.recall, m.iou,
              average_precision(model, gen.data.test));

  save_checkpoint(r.params, out);
  std::printf("%s", inspect(r.params).c_str());
  std::printf("saved %s\n", out.string().c_str());
}
