/**
 * Clipped-surrogate policy optimization over rollouts collected from remote
 * environment sessions: generalized advantage estimation, minibatched epochs
 * and a combined policy/value/entropy loss on the shared nine-output head.
 */
import * as tf from "@tensorflow/tfjs";
import { ACTION_COUNT } from "./policy.js";

export interface PPOConfig {
  gamma: number; // reward discount
  gaeLambda: number;
  clipRange: number;
  learningRate: number;
  rolloutSteps: number;
  minibatchSize: number;
  epochs: number;
  valueCoeff: number;
  entropyCoeff: number;
}

export const DEFAULT_PPO: PPOConfig = {
  gamma: 0.99,
  gaeLambda: 0.95,
  clipRange: 0.2,
  learningRate: 2.5e-4,
  rolloutSteps: 512,
  minibatchSize: 64,
  epochs: 4,
  valueCoeff: 0.5,
  entropyCoeff: 0.01,
};

export interface Transition {
  state: Float32Array; // normalized image, row-major
  action: number;
  reward: number;
  done: boolean;
  value: number;
  logProb: number;
}

export interface RolloutBatch {
  states: Float32Array[];
  actions: Int32Array;
  logProbs: Float32Array;
  advantages: Float32Array;
  returns: Float32Array;
}

/**
 * Generalized advantage estimation over a trajectory list. `lastValue` is
 * the critic's estimate for the state following the final transition (zero
 * when that transition ended the episode).
 */
export function computeAdvantages(
  transitions: Transition[],
  lastValue: number,
  gamma: number,
  gaeLambda: number,
): { advantages: Float32Array; returns: Float32Array } {
  const n = transitions.length;
  const advantages = new Float32Array(n);
  const returns = new Float32Array(n);
  let gae = 0;
  for (let t = n - 1; t >= 0; t--) {
    const tr = transitions[t];
    const nextValue = tr.done ? 0 : t === n - 1 ? lastValue : transitions[t + 1].value;
    const nonTerminal = tr.done ? 0 : 1;
    const delta = tr.reward + gamma * nextValue - tr.value;
    gae = delta + gamma * gaeLambda * nonTerminal * gae;
    advantages[t] = gae;
    returns[t] = gae + tr.value;
  }
  return { advantages, returns };
}

/** Shift/scale advantages to zero mean and unit spread. */
export function normalizeAdvantages(advantages: Float32Array): Float32Array {
  const n = advantages.length;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += advantages[i];
  mean /= n;
  let variance = 0;
  for (let i = 0; i < n; i++) variance += (advantages[i] - mean) ** 2;
  const std = Math.sqrt(variance / n) + 1e-8;
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = (advantages[i] - mean) / std;
  return out;
}

export interface UpdateStats {
  policyLoss: number;
  valueLoss: number;
  entropy: number;
}

/** One PPO update over a rollout batch; mutates the model in place. */
export function ppoUpdate(
  model: tf.LayersModel,
  optimizer: tf.Optimizer,
  batch: RolloutBatch,
  cfg: PPOConfig,
  inputShape: [number, number],
  shuffle: (n: number) => number[],
): UpdateStats {
  const n = batch.actions.length;
  const advantages = normalizeAdvantages(batch.advantages);
  const stats = { policyLoss: 0, valueLoss: 0, entropy: 0 };
  let updates = 0;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const order = shuffle(n);
    for (let start = 0; start < n; start += cfg.minibatchSize) {
      const idx = order.slice(start, start + cfg.minibatchSize);
      if (idx.length < 2) continue;
      const result = tf.tidy(() => {
        const states = tf.tensor4d(
          concatStates(batch.states, idx),
          [idx.length, inputShape[0], inputShape[1], 1],
        );
        const actions = tf.tensor1d(idx.map((i) => batch.actions[i]), "int32");
        const oldLogProbs = tf.tensor1d(idx.map((i) => batch.logProbs[i]));
        const adv = tf.tensor1d(idx.map((i) => advantages[i]));
        const returns = tf.tensor1d(idx.map((i) => batch.returns[i]));
        const actionMask = tf.oneHot(actions, ACTION_COUNT);

        let policyLoss = 0;
        let valueLoss = 0;
        let entropyValue = 0;
        optimizer.minimize(() => {
          const out = model.apply(states, { training: true }) as tf.Tensor2D;
          const logits = out.slice([0, 0], [idx.length, ACTION_COUNT]);
          const values = out
            .slice([0, ACTION_COUNT], [idx.length, 1])
            .squeeze([1]) as tf.Tensor1D;
          const logProbsAll = tf.logSoftmax(logits);
          const logProbs = tf.sum(tf.mul(logProbsAll, actionMask), 1);
          const ratio = tf.exp(tf.sub(logProbs, oldLogProbs));
          const clipped = tf.clipByValue(ratio, 1 - cfg.clipRange, 1 + cfg.clipRange);
          const surrogate = tf.neg(
            tf.mean(tf.minimum(tf.mul(ratio, adv), tf.mul(clipped, adv))),
          );
          const vLoss = tf.mean(tf.square(tf.sub(returns, values)));
          const probs = tf.softmax(logits);
          const entropy = tf.neg(tf.mean(tf.sum(tf.mul(probs, logProbsAll), 1)));
          policyLoss = surrogate.dataSync()[0];
          valueLoss = vLoss.dataSync()[0];
          entropyValue = entropy.dataSync()[0];
          return tf.add(
            tf.add(surrogate, tf.mul(vLoss, cfg.valueCoeff)),
            tf.mul(entropy, -cfg.entropyCoeff),
          ) as tf.Scalar;
        });
        return { policyLoss, valueLoss, entropyValue };
      });
      stats.policyLoss += result.policyLoss;
      stats.valueLoss += result.valueLoss;
      stats.entropy += result.entropyValue;
      updates += 1;
    }
  }
  if (updates > 0) {
    stats.policyLoss /= updates;
    stats.valueLoss /= updates;
    stats.entropy /= updates;
  }
  return stats;
}

function concatStates(states: Float32Array[], idx: number[]): Float32Array {
  const size = states[0].length;
  const out = new Float32Array(idx.length * size);
  idx.forEach((i, row) => out.set(states[i], row * size));
  return out;
}

/** Fisher-Yates permutation driven by an injected RNG. */
export function seededShuffle(rand: () => number): (n: number) => number[] {
  return (n: number) => {
    const order = Array.from({ length: n }, (_, i) => i);
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    return order;
  };
}
