/**
 * Evaluation entry point driven by the engine as a subprocess:
 *
 *     tsx src/evaluate.ts <workdir>
 *
 * Loads model.ts from the rendered working directory, trains it briefly with
 * a fixed seed on the stand-in dataset, and prints one GE_METRICS line with
 * holdout accuracy and the trainable parameter count. Any failure inside the
 * rendered blocks (syntax, shapes, NaNs) exits non-zero so the engine records
 * an invalid fitness.
 *
 * Environment:
 *   ML_EVAL_EPOCHS   training epochs (default 3)
 *   ML_EVAL_DATASET  optional JSON dataset path (see src/dataset.ts)
 */

import * as path from "node:path";
import { pathToFileURL } from "node:url";
import * as tf from "@tensorflow/tfjs";

import { loadDatasetFromFile, makeDataset, CHANNELS } from "./dataset";
import type { VarBag } from "../seed/model";

interface ModelModule {
  makeVarBag(t: typeof tf, seed: number): VarBag;
  getOptimizer(t: typeof tf): tf.Optimizer;
  buildExquisiteNetV2(
    t: typeof tf,
    vars: VarBag,
    inputChannels: number,
    numClasses: number,
  ): (x: tf.Tensor4D) => tf.Tensor2D;
}

const BATCH_SIZE = 60;
const WEIGHT_SEED = 42;

async function main(): Promise<number> {
  const workdir = process.argv[2];
  if (!workdir) {
    console.error("usage: tsx src/evaluate.ts <workdir>");
    return 2;
  }
  const modelPath = path.resolve(workdir, "model.ts");
  const mod = (await import(pathToFileURL(modelPath).href)) as ModelModule;

  const epochs = Number(process.env.ML_EVAL_EPOCHS ?? "3");
  const data = process.env.ML_EVAL_DATASET
    ? loadDatasetFromFile(process.env.ML_EVAL_DATASET)
    : makeDataset();

  const vars = mod.makeVarBag(tf, WEIGHT_SEED);
  const model = mod.buildExquisiteNetV2(tf, vars, CHANNELS, data.numClasses);
  const optimizer = mod.getOptimizer(tf);
  const paramCount = vars.paramCount();

  const trainCount = data.trainX.shape[0];
  for (let epoch = 0; epoch < epochs; epoch++) {
    for (let start = 0; start < trainCount; start += BATCH_SIZE) {
      const count = Math.min(BATCH_SIZE, trainCount - start);
      tf.tidy(() => {
        const xs = tf.slice(
          data.trainX,
          [start, 0, 0, 0],
          [count, -1, -1, -1],
        ) as tf.Tensor4D;
        const ys = tf.oneHot(
          tf.slice(data.trainY, start, count) as tf.Tensor1D,
          data.numClasses,
        );
        optimizer.minimize(() =>
          tf.losses.softmaxCrossEntropy(ys, model(xs)) as tf.Scalar,
        );
      });
    }
  }

  const accuracy = tf.tidy(() => {
    const logits = model(data.holdX);
    const hits = tf.equal(tf.argMax(logits, -1), data.holdY);
    return tf.mean(tf.cast(hits, "float32")).dataSync()[0];
  });
  if (!Number.isFinite(accuracy)) {
    console.error(`holdout accuracy is not finite: ${accuracy}`);
    return 1;
  }

  const metrics = {
    objectives: { accuracy, param_count: paramCount },
  };
  console.log(`GE_METRICS: ${JSON.stringify(metrics)}`);
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`evaluation failed: ${err?.stack ?? err}`);
    process.exit(1);
  });
