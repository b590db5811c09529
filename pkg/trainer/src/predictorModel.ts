/**
 * Map-completion autoencoder: a symmetric convolutional network with eleven
 * encoder and eleven decoder layers. Encoder layers are additionally wired
 * to their decoder counterparts (skip connections), and the per-cell sigmoid
 * output estimates each cell's probability of being a wall.
 *
 * Observations enter as three one-hot channels (free / obstacle / unknown);
 * inputs are padded to a stride multiple and the output is cropped back, so
 * the output grid always matches the input grid.
 */
import * as tf from "@tensorflow/tfjs";
import { CELL_FREE, CELL_OBSTACLE, CELL_UNKNOWN } from "./protocol.js";

export const ENCODER_LAYERS = 11;
export const DECODER_LAYERS = 11;
/** Four stride-2 stages: spatial dims must be padded to a multiple of 16. */
export const STRIDE_MULTIPLE = 16;

export interface PredictorSpec {
  height: number; // padded input height (multiple of STRIDE_MULTIPLE)
  width: number;
  /** Base channel width; layer widths scale from it. */
  channels: number;
  seed: number;
}

/** Smallest padded size covering (height, width). */
export function paddedSize(height: number, width: number): [number, number] {
  const pad = (v: number) => Math.ceil(v / STRIDE_MULTIPLE) * STRIDE_MULTIPLE;
  return [pad(height), pad(width)];
}

export function buildPredictorNetwork(spec: PredictorSpec): tf.LayersModel {
  if (spec.height % STRIDE_MULTIPLE || spec.width % STRIDE_MULTIPLE) {
    throw new Error(`input dims must be multiples of ${STRIDE_MULTIPLE}`);
  }
  const c = spec.channels;
  // Eleven encoder convolutions, downsampling on four of them.
  const encoderPlan: Array<{ filters: number; stride: number }> = [
    { filters: c, stride: 1 },
    { filters: c, stride: 2 },
    { filters: 2 * c, stride: 1 },
    { filters: 2 * c, stride: 2 },
    { filters: 4 * c, stride: 1 },
    { filters: 4 * c, stride: 2 },
    { filters: 4 * c, stride: 1 },
    { filters: 6 * c, stride: 2 },
    { filters: 6 * c, stride: 1 },
    { filters: 6 * c, stride: 1 },
    { filters: 6 * c, stride: 1 },
  ];
  let seed = spec.seed;
  const nextSeed = () => ++seed;
  const input = tf.input({ shape: [spec.height, spec.width, 3] });
  let x = input as tf.SymbolicTensor;
  const encoderTaps: tf.SymbolicTensor[] = [];
  for (const { filters, stride } of encoderPlan) {
    x = tf.layers
      .conv2d({
        filters,
        kernelSize: 3,
        strides: stride,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.heNormal({ seed: nextSeed() }),
      })
      .apply(x) as tf.SymbolicTensor;
    encoderTaps.push(x);
  }
  // Eleven decoder deconvolutions mirror the encoder (strides reversed, so
  // skip shapes line up); each receives its encoder counterpart through a
  // skip connection. The last one is the sigmoid wall-probability output.
  const decoderPlan = encoderPlan
    .slice()
    .reverse()
    .map(({ stride }, i) => ({
      filters: i === DECODER_LAYERS - 1 ? 1 : encoderPlan[DECODER_LAYERS - 2 - i].filters,
      stride,
    }));
  for (let i = 0; i < DECODER_LAYERS; i++) {
    const skip = encoderTaps[ENCODER_LAYERS - 1 - i];
    const last = i === DECODER_LAYERS - 1;
    x = tf.layers.concatenate().apply([x, skip]) as tf.SymbolicTensor;
    x = tf.layers
      .conv2dTranspose({
        filters: decoderPlan[i].filters,
        kernelSize: 3,
        strides: decoderPlan[i].stride,
        padding: "same",
        activation: last ? "sigmoid" : "relu",
        kernelInitializer: last
          ? tf.initializers.glorotNormal({ seed: nextSeed() })
          : tf.initializers.heNormal({ seed: nextSeed() }),
      })
      .apply(x) as tf.SymbolicTensor;
  }
  return tf.model({ inputs: input, outputs: x });
}

/** One-hot encode cell classes into a padded (1, H, W, 3) tensor. */
export function cellsToInput(
  cells: Uint8Array,
  height: number,
  width: number,
  padHeight: number,
  padWidth: number,
): tf.Tensor4D {
  const data = new Float32Array(padHeight * padWidth * 3);
  // Padding area reads as unknown.
  for (let y = 0; y < padHeight; y++) {
    for (let x = 0; x < padWidth; x++) {
      const base = (y * padWidth + x) * 3;
      if (y < height && x < width) {
        const cell = cells[y * width + x];
        if (cell === CELL_FREE) data[base] = 1;
        else if (cell === CELL_OBSTACLE) data[base + 1] = 1;
        else if (cell === CELL_UNKNOWN) data[base + 2] = 1;
        else throw new Error(`bad cell value ${cell}`);
      } else {
        data[base + 2] = 1;
      }
    }
  }
  return tf.tensor4d(data, [1, padHeight, padWidth, 3]);
}

/** Run the model on one observation and crop back to (height, width). */
export function predictProbabilities(
  model: tf.LayersModel,
  cells: Uint8Array,
  height: number,
  width: number,
): Float32Array {
  const [padHeight, padWidth] = paddedSize(height, width);
  return tf.tidy(() => {
    const input = cellsToInput(cells, height, width, padHeight, padWidth);
    const out = model.predict(input) as tf.Tensor4D;
    const cropped = out.slice([0, 0, 0, 0], [1, height, width, 1]);
    return cropped.dataSync() as Float32Array;
  });
}
