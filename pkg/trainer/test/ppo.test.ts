import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";
import { buildPolicyNetwork } from "../src/policy.js";
import {
  DEFAULT_PPO,
  RolloutBatch,
  Transition,
  computeAdvantages,
  normalizeAdvantages,
  ppoUpdate,
  seededShuffle,
} from "../src/ppo.js";
import { mulberry32 } from "../src/rng.js";

function transition(reward: number, value: number, done = false): Transition {
  return { state: new Float32Array(4), action: 0, reward, done, value, logProb: -2.0 };
}

describe("advantage estimation", () => {
  it("matches a hand-computed single-step case", () => {
    // One transition, episode ends: advantage = r - v, return = r.
    const { advantages, returns } = computeAdvantages([transition(2.0, 0.5, true)], 0, 0.99, 0.95);
    expect(advantages[0]).toBeCloseTo(1.5, 6);
    expect(returns[0]).toBeCloseTo(2.0, 6);
  });

  it("matches a hand-computed two-step case", () => {
    const gamma = 0.5;
    const lambda = 1.0;
    const t1 = transition(1.0, 1.0);
    const t2 = transition(0.0, 2.0, true);
    const { advantages } = computeAdvantages([t1, t2], 0, gamma, lambda);
    // delta2 = 0 - 2 = -2; delta1 = 1 + 0.5*2 - 1 = 1; adv1 = 1 + 0.5*(-2) = 0.
    expect(advantages[1]).toBeCloseTo(-2.0, 6);
    expect(advantages[0]).toBeCloseTo(0.0, 6);
  });

  it("normalization is an order-preserving shift and scale", () => {
    const rand = mulberry32(5);
    const raw = Float32Array.from({ length: 64 }, () => rand() * 10 - 5);
    const normalized = normalizeAdvantages(raw);
    const argmax = (xs: Float32Array) => xs.indexOf(Math.max(...Array.from(xs)));
    expect(argmax(normalized)).toBe(argmax(raw));
    const mean = normalized.reduce((a, b) => a + b, 0) / normalized.length;
    expect(Math.abs(mean)).toBeLessThan(1e-5);
    // Pairwise order preserved.
    for (let i = 1; i < raw.length; i++) {
      expect(Math.sign(normalized[i] - normalized[i - 1])).toBe(Math.sign(raw[i] - raw[i - 1]));
    }
  });
});

describe("ppo update", () => {
  it("changes the weights and keeps losses finite", () => {
    const h = 8;
    const w = 8;
    const model = buildPolicyNetwork({ height: h, width: w, seed: 11 });
    const rand = mulberry32(3);
    const n = 32;
    const states = Array.from({ length: n }, () =>
      Float32Array.from({ length: h * w }, () => rand()),
    );
    const batch: RolloutBatch = {
      states,
      actions: Int32Array.from({ length: n }, () => Math.floor(rand() * 8)),
      logProbs: Float32Array.from({ length: n }, () => Math.log(1 / 8)),
      advantages: Float32Array.from({ length: n }, () => rand() * 2 - 1),
      returns: Float32Array.from({ length: n }, () => rand()),
    };
    const before = (model.getWeights()[0] as tf.Tensor).dataSync().slice(0, 16);
    const optimizer = tf.train.adam(1e-3);
    const stats = ppoUpdate(
      model,
      optimizer,
      batch,
      { ...DEFAULT_PPO, epochs: 2, minibatchSize: 16 },
      [h, w],
      seededShuffle(mulberry32(7)),
    );
    const after = (model.getWeights()[0] as tf.Tensor).dataSync().slice(0, 16);
    expect(Number.isFinite(stats.policyLoss)).toBe(true);
    expect(Number.isFinite(stats.valueLoss)).toBe(true);
    expect(Number.isFinite(stats.entropy)).toBe(true);
    expect(Array.from(after)).not.toEqual(Array.from(before));
  });
});
