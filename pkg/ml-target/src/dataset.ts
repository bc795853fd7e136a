/**
 * Deterministic stand-in dataset: three 12x12 RGB texture classes
 * (horizontal gradient, vertical gradient, checkerboard) with seeded noise.
 * A real dataset can be substituted through the ML_EVAL_DATASET env variable;
 * see loadDatasetFromFile for the expected JSON shape.
 */

import { readFileSync } from "node:fs";
import * as tf from "@tensorflow/tfjs";

export const IMAGE_SIZE = 12;
export const CHANNELS = 3;
export const NUM_CLASSES = 3;

export interface Dataset {
  trainX: tf.Tensor4D;
  trainY: tf.Tensor1D;
  holdX: tf.Tensor4D;
  holdY: tf.Tensor1D;
  numClasses: number;
}

/** Small fast PRNG so the split and noise are identical on every run. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function pattern(cls: number, row: number, col: number): number {
  switch (cls) {
    case 0:
      return col / (IMAGE_SIZE - 1);
    case 1:
      return row / (IMAGE_SIZE - 1);
    default:
      return (row + col) / (2 * (IMAGE_SIZE - 1));
  }
}

export function makeDataset(total = 300, holdout = 60, seed = 7): Dataset {
  const rand = mulberry32(seed);
  const pixels = new Float32Array(total * IMAGE_SIZE * IMAGE_SIZE * CHANNELS);
  const labels = new Int32Array(total);
  let p = 0;
  for (let i = 0; i < total; i++) {
    const cls = i % NUM_CLASSES;
    labels[i] = cls;
    for (let r = 0; r < IMAGE_SIZE; r++) {
      for (let c = 0; c < IMAGE_SIZE; c++) {
        const base = pattern(cls, r, c);
        for (let ch = 0; ch < CHANNELS; ch++) {
          const tint = 0.8 + 0.1 * ch;
          pixels[p++] = base * tint + 3.2 * (rand() - 0.5);
        }
      }
    }
  }
  return split(pixels, labels, total, holdout);
}

/**
 * JSON dataset contract: {"size": s, "channels": c, "numClasses": k,
 * "images": [flat floats, size*size*channels per image], "labels": [ints]}.
 * The last `holdout` images form the holdout split.
 */
export function loadDatasetFromFile(path: string, holdout = 60): Dataset {
  const doc = JSON.parse(readFileSync(path, "utf-8"));
  const total = doc.labels.length;
  return split(
    Float32Array.from(doc.images),
    Int32Array.from(doc.labels),
    total,
    holdout,
    doc.size,
    doc.channels,
    doc.numClasses,
  );
}

function split(
  pixels: Float32Array,
  labels: Int32Array,
  total: number,
  holdout: number,
  size = IMAGE_SIZE,
  channels = CHANNELS,
  numClasses = NUM_CLASSES,
): Dataset {
  const trainCount = total - holdout;
  const all = tf.tensor4d(pixels, [total, size, size, channels]);
  const allY = tf.tensor1d(labels, "int32");
  const ds: Dataset = {
    trainX: tf.slice(all, [0, 0, 0, 0], [trainCount, size, size, channels]) as tf.Tensor4D,
    trainY: tf.slice(allY, 0, trainCount) as tf.Tensor1D,
    holdX: tf.slice(all, [trainCount, 0, 0, 0], [holdout, size, size, channels]) as tf.Tensor4D,
    holdY: tf.slice(allY, trainCount, holdout) as tf.Tensor1D,
    numClasses,
  };
  all.dispose();
  allY.dispose();
  return ds;
}
