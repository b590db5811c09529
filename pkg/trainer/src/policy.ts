/**
 * Actor-critic network over grayscale state images: a compact convolutional
 * trunk in the classic DQN style feeding one head of nine scalars, eight
 * action logits plus one state value. Policy and value share every layer
 * but the last.
 */
import * as tf from "@tensorflow/tfjs";

export const ACTION_COUNT = 8;
export const HEAD_OUTPUTS = 9; // 8 policy logits + 1 value

export interface PolicySpec {
  height: number;
  width: number;
  seed: number;
}

/**
 * Trunk strides follow the Atari recipe scaled to the input: large inputs
 * (>= 64) use the 8/4/3 kernels with 4/2/1 strides, small desk-scale maps
 * use 4/3/3 kernels with 2/2/1 strides so the spatial map stays non-empty.
 */
export function buildPolicyNetwork(spec: PolicySpec): tf.LayersModel {
  const large = Math.min(spec.height, spec.width) >= 64;
  const kernels = large ? [8, 4, 3] : [4, 3, 3];
  const strides = large ? [4, 2, 1] : [2, 2, 1];
  const filters = [32, 64, 64];
  const input = tf.input({ shape: [spec.height, spec.width, 1] });
  let x = input as tf.SymbolicTensor;
  for (let i = 0; i < 3; i++) {
    x = tf.layers
      .conv2d({
        filters: filters[i],
        kernelSize: kernels[i],
        strides: strides[i],
        activation: "relu",
        padding: "same",
        kernelInitializer: tf.initializers.heNormal({ seed: spec.seed + i }),
      })
      .apply(x) as tf.SymbolicTensor;
  }
  x = tf.layers.flatten().apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .dense({
      units: 512,
      activation: "relu",
      kernelInitializer: tf.initializers.heNormal({ seed: spec.seed + 7 }),
    })
    .apply(x) as tf.SymbolicTensor;
  const head = tf.layers
    .dense({
      units: HEAD_OUTPUTS,
      kernelInitializer: tf.initializers.glorotNormal({ seed: spec.seed + 11 }),
    })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: head });
}

export interface PolicyOutput {
  /** Probabilities over the eight actions. */
  probs: Float32Array;
  logProbs: Float32Array;
  value: number;
}

/** Normalize a state image to [0, 1] floats. */
export function imageToInput(data: Uint8Array, height: number, width: number): tf.Tensor4D {
  const floats = new Float32Array(data.length);
  for (let i = 0; i < data.length; i++) floats[i] = data[i] / 255;
  return tf.tensor4d(floats, [1, height, width, 1]);
}

/** Run the network on one state image. */
export function evaluatePolicy(model: tf.LayersModel, state: tf.Tensor4D): PolicyOutput {
  return tf.tidy(() => {
    const out = model.predict(state) as tf.Tensor2D;
    const logits = out.slice([0, 0], [1, ACTION_COUNT]);
    const value = out.slice([0, ACTION_COUNT], [1, 1]);
    const logProbs = tf.logSoftmax(logits).dataSync() as Float32Array;
    const probs = tf.softmax(logits).dataSync() as Float32Array;
    return { probs, logProbs, value: value.dataSync()[0] };
  });
}
