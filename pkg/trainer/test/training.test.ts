/**
 * End-to-end training checks at miniature scale: observation harvesting over
 * the live protocol, autoencoder memorization on one map, PPO rollout
 * determinism and a short optimization run. Full desk-scale runs live behind
 * the CLI (see the README); these tests keep every pipeline honest without
 * burning CPU hours.
 */
import * as tf from "@tensorflow/tfjs";
import { describe, expect, inject, it } from "vitest";
import { collectObservations } from "../src/dataset.js";
import { loadManifest } from "../src/maps.js";
import { DEFAULT_PPO } from "../src/ppo.js";
import { predictProbabilities } from "../src/predictorModel.js";
import { PredictorServer, modelPredictFn } from "../src/predictorServer.js";
import { EnvSession } from "../src/protocol.js";
import { PolicyTrainer, randomBaseline } from "../src/trainPolicy.js";
import { decidedCells, thresholdedF1, trainPredictor } from "../src/trainPredictor.js";

const HOST = "127.0.0.1";

let memorizedModel: tf.LayersModel | null = null;

describe("predictor training", () => {
  it("memorizes a single-map corpus to a high thresholded F1", async () => {
    const dataset = loadManifest(inject("datasetRoot"));
    const samples = await collectObservations(
      { ...dataset, mapIds: [dataset.mapIds[0]] },
      {
        host: HOST,
        port: inject("envPort"),
        episodes: 10,
        stepsPerEpisode: 40,
        snapshotEvery: 10,
        seed: 11,
      },
    );
    expect(samples.length).toBeGreaterThanOrEqual(30);
    const { model, reports } = await trainPredictor(samples, {
      epochs: 16,
      batchSize: 8,
      learningRate: 2e-3,
      channels: 4,
      seed: 7,
      deltaFree: 0.93,
      deltaObstacle: 0.95,
      validationFraction: 0.2,
    });
    const last = reports[reports.length - 1].validationF1;
    expect(last).toBeGreaterThanOrEqual(0.9);
    // The score must come from actual decisions, not the vacuous case of an
    // everywhere-undecided prediction.
    const sample = samples[0];
    const probs = predictProbabilities(model, sample.cells, sample.height, sample.width);
    const decided = decidedCells(probs, 0.93, 0.95);
    expect(decided.free + decided.wall).toBeGreaterThan(
      (sample.width * sample.height) / 4,
    );
    memorizedModel = model;
  }, 240_000);

  it("serves the trained model to the engine as a remote predictor", async () => {
    expect(memorizedModel).not.toBeNull();
    const server = new PredictorServer(modelPredictFn(memorizedModel!));
    const port = await server.listen(HOST, 0);
    try {
      const nullSession = new EnvSession(HOST, inject("envPort"));
      const plain = await nullSession.reset({ map_id: "two_0000", seed: 17 });
      await nullSession.close();

      const session = new EnvSession(HOST, inject("envPort"));
      const augmented = await session.reset({
        map_id: "two_0000",
        seed: 17,
        predictor: `remote:${HOST}:${port}`,
      });
      const step = await session.step(2);
      expect(typeof step.reward).toBe("number");
      await session.close();
      // The memorized map gives the episode a synthesized head start.
      expect(augmented.coverage).toBeGreaterThan(plain.coverage);
    } finally {
      server.close();
    }
  }, 240_000);

  it("thresholded F1 is exact on hand-built grids", () => {
    // 4 decided walls (1 wrong), 1 missed wall among decided frees.
    const probs = Float32Array.from([0.99, 0.99, 0.99, 0.99, 0.01, 0.01, 0.5, 0.01]);
    const truth = Uint8Array.from([1, 1, 1, 0, 1, 0, 1, 0]);
    const interior = Uint8Array.from([1, 1, 1, 1, 1, 1, 1, 1]);
    const f1 = thresholdedF1(probs, truth, interior, 0.93, 0.95);
    // tp=3, fp=1, fn=1 -> 2*3/(6+1+1) = 0.75
    expect(f1).toBeCloseTo(0.75, 6);
  });
});

describe("policy training", () => {
  const cfg = (seed: number) => ({
    host: HOST,
    port: inject("envPort"),
    mapIds: loadManifest(inject("datasetRoot")).mapIds,
    coverageTarget: 0.85,
    maxSteps: 40,
    totalSteps: 128,
    evalEpisodes: 2,
    seed,
    ppo: { ...DEFAULT_PPO, rolloutSteps: 64, minibatchSize: 16, epochs: 2 },
  });

  it("same seed yields an identical first rollout", async () => {
    const actions = async () => {
      const trainer = new PolicyTrainer(cfg(31), [22, 23]);
      const session = new EnvSession(HOST, inject("envPort"));
      const rollout = await trainer.collectRollout(session);
      await session.close();
      return rollout.actions;
    };
    const a = await actions();
    const b = await actions();
    expect(a).toEqual(b);
    expect(a.length).toBe(64);
  }, 240_000);

  it("runs updates over live rollouts with finite losses", async () => {
    const trainer = new PolicyTrainer(cfg(13), [22, 23]);
    const session = new EnvSession(HOST, inject("envPort"));
    for (let iteration = 0; iteration < 2; iteration++) {
      const rollout = await trainer.collectRollout(session);
      const stats = trainer.update(rollout.transitions, rollout.lastValue);
      expect(Number.isFinite(stats.policyLoss)).toBe(true);
      expect(Number.isFinite(stats.valueLoss)).toBe(true);
      expect(stats.entropy).toBeGreaterThan(0);
    }
    await session.close();
  }, 240_000);

  it("random baseline records coverage for comparison", async () => {
    const session = new EnvSession(HOST, inject("envPort"));
    const coverages = await randomBaseline(
      session,
      loadManifest(inject("datasetRoot")).mapIds,
      3,
      0.95,
      30,
      5,
    );
    await session.close();
    expect(coverages.length).toBe(3);
    for (const c of coverages) {
      expect(c).toBeGreaterThan(0);
      expect(c).toBeLessThanOrEqual(1);
    }
  }, 240_000);
});
