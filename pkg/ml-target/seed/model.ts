/**
 * Miniature ExquisiteNet-style classifier whose building blocks are the gene
 * segments under evolution. Every function between a pair of block markers is
 * one gene; everything else is immutable scaffold.
 *
 * The file has no runtime imports so it can be loaded from any rendered
 * working directory: the TensorFlow.js namespace is injected as `tf` and all
 * trainable tensors are created through the VarBag registry, which also
 * reports the total parameter count.
 */

import type * as TF from "@tensorflow/tfjs";

type Tf = typeof TF;
type Layer = (x: TF.Tensor4D) => TF.Tensor4D;

export interface VarBag {
  weight(name: string, shape: number[], stddev?: number): TF.Variable;
  ones(name: string, shape: number[]): TF.Variable;
  zeros(name: string, shape: number[]): TF.Variable;
  paramCount(): number;
}

export function makeVarBag(tf: Tf, seed: number): VarBag {
  const registry = new Map<string, TF.Variable>();
  let counter = 0;
  const register = (name: string, v: TF.Variable) => {
    if (registry.has(name)) throw new Error(`duplicate variable ${name}`);
    registry.set(name, v);
    return v;
  };
  return {
    weight(name, shape, stddev = 0.1) {
      counter += 1;
      const init = tf.randomNormal(shape, 0, stddev, "float32", seed + counter);
      return register(name, tf.variable(init, true, name));
    },
    ones(name, shape) {
      return register(name, tf.variable(tf.ones(shape), true, name));
    },
    zeros(name, shape) {
      return register(name, tf.variable(tf.zeros(shape), true, name));
    },
    paramCount() {
      let total = 0;
      for (const v of registry.values()) total += v.size;
      return total;
    },
  };
}

// @GE-BLOCK: get_optimizer
export function getOptimizer(tf: Tf): TF.Optimizer {
  return tf.train.adam(0.01);
}
// @GE-END

// @GE-BLOCK: SE
export function seBlock(tf: Tf, vars: VarBag, name: string, channels: number): Layer {
  const hidden = Math.max(2, Math.floor(channels / 4));
  const w1 = vars.weight(`${name}/fc1`, [channels, hidden]);
  const w2 = vars.weight(`${name}/fc2`, [hidden, channels]);
  return (x) => {
    const pooled = tf.mean(x, [1, 2]) as TF.Tensor2D;
    const gate = tf.sigmoid(tf.matMul(tf.relu(tf.matMul(pooled, w1 as TF.Tensor2D)), w2 as TF.Tensor2D));
    return tf.mul(x, tf.reshape(gate, [-1, 1, 1, channels])) as TF.Tensor4D;
  };
}
// @GE-END

// @GE-BLOCK: SE_LN
export function seLnBlock(tf: Tf, vars: VarBag, name: string, channels: number): Layer {
  const gain = vars.ones(`${name}/gain`, [channels]);
  const shift = vars.zeros(`${name}/shift`, [channels]);
  return (x) => {
    const pooled = tf.mean(x, [1, 2]);
    const mean = tf.mean(pooled, 1, true);
    const variance = tf.mean(tf.square(tf.sub(pooled, mean)), 1, true);
    const normed = tf.div(tf.sub(pooled, mean), tf.sqrt(tf.add(variance, 1e-5)));
    const gate = tf.sigmoid(tf.add(tf.mul(normed, gain), shift));
    return tf.mul(x, tf.reshape(gate, [-1, 1, 1, channels])) as TF.Tensor4D;
  };
}
// @GE-END

// @GE-BLOCK: DFSEBV2
export function dfsebv2Block(
  tf: Tf,
  vars: VarBag,
  name: string,
  channels: number,
  useSeLn: boolean,
): Layer {
  const expanded = channels * 2;
  const pw1 = vars.weight(`${name}/pw1`, [1, 1, channels, expanded]);
  const bn1 = batchNorm(tf, vars, `${name}/bn1`, expanded);
  const dw = dwBlock(tf, vars, `${name}/dw`, expanded, 3, 1);
  const pw2 = vars.weight(`${name}/pw2`, [1, 1, expanded, channels]);
  const bn2 = batchNorm(tf, vars, `${name}/bn2`, channels);
  const recalibrate = useSeLn
    ? seLnBlock(tf, vars, `${name}/se_ln`, channels)
    : seBlock(tf, vars, `${name}/se`, channels);
  const silu = (t: TF.Tensor4D) => tf.mul(t, tf.sigmoid(t)) as TF.Tensor4D;
  const hardswish = (t: TF.Tensor4D) =>
    tf.mul(t, tf.div(tf.clipByValue(tf.add(t, 3), 0, 6), 6)) as TF.Tensor4D;
  return (x) => {
    let h = tf.conv2d(x, pw1 as TF.Tensor4D, 1, "same");
    h = silu(bn1(h));
    h = dw(h);
    h = tf.conv2d(h, pw2 as TF.Tensor4D, 1, "same");
    h = hardswish(bn2(h));
    h = recalibrate(h);
    return tf.add(h, x) as TF.Tensor4D;
  };
}

function batchNorm(tf: Tf, vars: VarBag, name: string, channels: number): Layer {
  const scale = vars.ones(`${name}/scale`, [channels]);
  const shift = vars.zeros(`${name}/shift`, [channels]);
  return (x) => {
    const mean = tf.mean(x, [0, 1, 2], true);
    const variance = tf.mean(tf.square(tf.sub(x, mean)), [0, 1, 2], true);
    const normed = tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, 1e-5)));
    return tf.add(tf.mul(normed, scale), shift) as TF.Tensor4D;
  };
}
// @GE-END

// @GE-BLOCK: FCT
export function fctBlock(tf: Tf, vars: VarBag, name: string, channels: number): Layer {
  const focus = vars.weight(`${name}/dw4x4`, [4, 4, channels, 1]);
  const expand = eveBlock(tf);
  return (x) => {
    const focused = tf.depthwiseConv2d(x, focus as TF.Tensor4D, 1, "same");
    return expand(focused);
  };
}
// @GE-END

// @GE-BLOCK: EVE
export function eveBlock(tf: Tf): Layer {
  return (x) => {
    const maxed = tf.maxPool(x, 2, 2, "same");
    const minned = tf.neg(tf.maxPool(tf.neg(x), 2, 2, "same"));
    return tf.concat([maxed, minned], -1) as TF.Tensor4D;
  };
}
// @GE-END

// @GE-BLOCK: ME
export function meBlock(tf: Tf): Layer {
  return (x) => {
    const maxed = tf.maxPool(x, 3, 1, "same");
    const minned = tf.neg(tf.maxPool(tf.neg(x), 3, 1, "same"));
    return tf.concat([maxed, minned], -1) as TF.Tensor4D;
  };
}
// @GE-END

// @GE-BLOCK: DW
export function dwBlock(
  tf: Tf,
  vars: VarBag,
  name: string,
  channels: number,
  kernelSize = 3,
  stride: 1 | 2 = 1,
): Layer {
  const filter = vars.weight(`${name}/filter`, [kernelSize, kernelSize, channels, 1]);
  return (x) => tf.depthwiseConv2d(x, filter as TF.Tensor4D, stride, "same");
}
// @GE-END

// @GE-BLOCK: ExquisiteNetV2
export function buildExquisiteNetV2(
  tf: Tf,
  vars: VarBag,
  inputChannels: number,
  numClasses: number,
): (x: TF.Tensor4D) => TF.Tensor2D {
  const fct = fctBlock(tf, vars, "fct", inputChannels);
  const stemWidth = 16;
  const stem = vars.weight("stem/pw", [1, 1, inputChannels * 2, stemWidth]);
  const stage1 = dfsebv2Block(tf, vars, "stage1", stemWidth, false);
  const shrink = eveBlock(tf);
  const stage2 = dfsebv2Block(tf, vars, "stage2", stemWidth * 2, true);
  const widen = meBlock(tf);
  const mix = dwBlock(tf, vars, "mix", stemWidth * 4, 3, 1);
  const headW = vars.weight("head/w", [stemWidth * 4, numClasses]);
  const headB = vars.zeros("head/b", [numClasses]);
  return (x) => {
    let h = fct(x);
    h = tf.conv2d(h, stem as TF.Tensor4D, 1, "same");
    h = stage1(h);
    h = shrink(h);
    h = stage2(h);
    h = widen(h);
    h = mix(h);
    const pooled = tf.mean(h, [1, 2]) as TF.Tensor2D;
    return tf.add(tf.matMul(pooled, headW as TF.Tensor2D), headB) as TF.Tensor2D;
  };
}
// @GE-END
