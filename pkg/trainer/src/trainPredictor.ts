/**
 * Supervised training of the map-completion autoencoder: per-cell binary
 * cross-entropy against the wall mask, weighted to interior cells, with a
 * thresholded F1 validation after every epoch.
 */
import * as tf from "@tensorflow/tfjs";
import { ObservationSample } from "./dataset.js";
import {
  buildPredictorNetwork,
  cellsToInput,
  paddedSize,
  predictProbabilities,
} from "./predictorModel.js";
import { CELL_FREE, CELL_OBSTACLE } from "./protocol.js";
import { mulberry32 } from "./rng.js";

export interface PredictorTrainConfig {
  epochs: number;
  batchSize: number;
  learningRate: number;
  channels: number;
  seed: number;
  deltaFree: number;
  deltaObstacle: number;
  validationFraction: number;
}

export const DEFAULT_PREDICTOR_TRAIN: PredictorTrainConfig = {
  epochs: 20,
  batchSize: 8,
  learningRate: 1e-3,
  channels: 16,
  seed: 3,
  deltaFree: 0.93,
  deltaObstacle: 0.95,
  validationFraction: 0.2,
};

export interface EpochReport {
  epoch: number;
  loss: number;
  validationF1: number;
}

/** Confidence-thresholded F1 with walls positive, mirroring the engine. */
export function thresholdedF1(
  probabilities: Float32Array,
  truthWall: Uint8Array,
  interior: Uint8Array,
  deltaFree: number,
  deltaObstacle: number,
): number {
  const freeCut = (1 - deltaFree) / 2;
  const wallCut = (1 + deltaObstacle) / 2;
  let tp = 0;
  let fp = 0;
  let fn = 0;
  for (let i = 0; i < probabilities.length; i++) {
    const p = probabilities[i];
    const decidedWall = p >= wallCut;
    const decidedFree = p <= freeCut;
    if (!decidedWall && !decidedFree) continue;
    if (decidedWall && truthWall[i]) tp++;
    else if (decidedWall) fp++;
    else if (decidedFree && truthWall[i]) fn++;
  }
  const denominator = 2 * tp + fp + fn;
  return denominator === 0 ? 1.0 : (2 * tp) / denominator;
}

function buildTensors(
  samples: ObservationSample[],
  padHeight: number,
  padWidth: number,
): { inputs: tf.Tensor4D; targets: tf.Tensor4D; weights: tf.Tensor4D } {
  const inputs: tf.Tensor4D[] = [];
  const targetData = new Float32Array(samples.length * padHeight * padWidth);
  const weightData = new Float32Array(samples.length * padHeight * padWidth);
  samples.forEach((sample, s) => {
    inputs.push(cellsToInput(sample.cells, sample.height, sample.width, padHeight, padWidth));
    for (let y = 0; y < sample.height; y++) {
      for (let x = 0; x < sample.width; x++) {
        const from = y * sample.width + x;
        const to = s * padHeight * padWidth + y * padWidth + x;
        targetData[to] = sample.truth.wallMask[from];
        weightData[to] = 1; // padding stays zero-weight
      }
    }
  });
  const stacked = tf.concat(inputs, 0) as tf.Tensor4D;
  inputs.forEach((t) => t.dispose());
  return {
    inputs: stacked,
    targets: tf.tensor4d(targetData, [samples.length, padHeight, padWidth, 1]),
    weights: tf.tensor4d(weightData, [samples.length, padHeight, padWidth, 1]),
  };
}

export interface TrainedPredictor {
  model: tf.LayersModel;
  reports: EpochReport[];
}

export async function trainPredictor(
  samples: ObservationSample[],
  cfg: PredictorTrainConfig,
  onEpoch?: (report: EpochReport) => void,
): Promise<TrainedPredictor> {
  if (samples.length === 0) throw new Error("no training samples");
  const width = samples[0].width;
  const height = samples[0].height;
  for (const sample of samples) {
    if (sample.width !== width || sample.height !== height) {
      throw new Error("all samples must share one map shape");
    }
  }
  const [padHeight, padWidth] = paddedSize(height, width);
  const model = buildPredictorNetwork({
    height: padHeight,
    width: padWidth,
    channels: cfg.channels,
    seed: cfg.seed,
  });
  const rand = mulberry32(cfg.seed);
  const shuffled = samples.slice();
  for (let i = shuffled.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [shuffled[i], shuffled[j]] = [shuffled[j], shuffled[i]];
  }
  const validationCount = Math.max(1, Math.floor(shuffled.length * cfg.validationFraction));
  const validation = shuffled.slice(0, validationCount);
  const training = shuffled.slice(validationCount);
  if (training.length === 0) throw new Error("not enough samples to split");

  const { inputs, targets, weights } = buildTensors(training, padHeight, padWidth);
  const optimizer = tf.train.adam(cfg.learningRate);
  const reports: EpochReport[] = [];
  const order = Array.from({ length: training.length }, (_, i) => i);
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let lossSum = 0;
    let batches = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const idx = order.slice(start, start + cfg.batchSize);
      const loss = tf.tidy(() => {
        const index = tf.tensor1d(idx, "int32");
        const x = tf.gather(inputs, index);
        const y = tf.gather(targets, index);
        const w = tf.gather(weights, index);
        let lossValue = 0;
        optimizer.minimize(() => {
          const p = model.apply(x, { training: true }) as tf.Tensor4D;
          const eps = 1e-7;
          const clipped = tf.clipByValue(p, eps, 1 - eps);
          const bce = tf.neg(
            tf.add(
              tf.mul(y, tf.log(clipped)),
              tf.mul(tf.sub(1, y), tf.log(tf.sub(1, clipped))),
            ),
          );
          const weighted = tf.div(tf.sum(tf.mul(bce, w)), tf.sum(w));
          lossValue = weighted.dataSync()[0];
          return weighted as tf.Scalar;
        });
        return lossValue;
      });
      lossSum += loss;
      batches += 1;
    }
    let f1Sum = 0;
    for (const sample of validation) {
      const probs = predictProbabilities(model, sample.cells, sample.height, sample.width);
      f1Sum += thresholdedF1(
        probs,
        sample.truth.wallMask,
        sample.truth.interiorMask,
        cfg.deltaFree,
        cfg.deltaObstacle,
      );
    }
    const report: EpochReport = {
      epoch,
      loss: lossSum / Math.max(1, batches),
      validationF1: f1Sum / validation.length,
    };
    reports.push(report);
    onEpoch?.(report);
  }
  inputs.dispose();
  targets.dispose();
  weights.dispose();
  optimizer.dispose();
  return { model, reports };
}

/** Sanity statistic used by tests: fraction of output values inside [0, 1]. */
export function outputsWithinUnitInterval(probabilities: Float32Array): boolean {
  for (const p of probabilities) {
    if (!(p >= 0 && p <= 1)) return false;
  }
  return true;
}

/** Cells decided by the confidence cutoffs, for coverage-style checks. */
export function decidedCells(
  probabilities: Float32Array,
  deltaFree: number,
  deltaObstacle: number,
): { free: number; wall: number } {
  const freeCut = (1 - deltaFree) / 2;
  const wallCut = (1 + deltaObstacle) / 2;
  let free = 0;
  let wall = 0;
  for (const p of probabilities) {
    if (p <= freeCut) free++;
    else if (p >= wallCut) wall++;
  }
  return { free, wall };
}

export { CELL_FREE, CELL_OBSTACLE };
