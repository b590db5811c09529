/**
 * PPO training loop over remote environment sessions: collects fixed-length
 * rollouts episode by episode, runs clipped-surrogate updates, and logs a
 * learning curve of evaluation coverage.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { buildPolicyNetwork, evaluatePolicy, imageToInput } from "./policy.js";
import {
  DEFAULT_PPO,
  PPOConfig,
  RolloutBatch,
  Transition,
  computeAdvantages,
  ppoUpdate,
  seededShuffle,
} from "./ppo.js";
import { EnvSession, ObservationReply, decodeObservation } from "./protocol.js";
import { mulberry32, sampleIndex } from "./rng.js";

export interface PolicyTrainConfig {
  host: string;
  port: number;
  mapIds: string[];
  coverageTarget: number;
  maxSteps: number;
  totalSteps: number;
  evalEpisodes: number;
  seed: number;
  ppo: PPOConfig;
}

export interface IterationReport {
  iteration: number;
  envSteps: number;
  meanReward: number;
  meanCoverage: number;
  policyLoss: number;
  valueLoss: number;
  entropy: number;
}

interface StepSample {
  state: Float32Array;
  height: number;
  width: number;
}

function observationState(reply: ObservationReply): StepSample {
  const { data, height, width } = decodeObservation(reply);
  const state = new Float32Array(data.length);
  for (let i = 0; i < data.length; i++) state[i] = data[i] / 255;
  return { state, height, width };
}

export class PolicyTrainer {
  readonly model: tf.LayersModel;
  private readonly optimizer: tf.Optimizer;
  private readonly rand: () => number;
  private readonly shuffle: (n: number) => number[];
  private inputShape: [number, number] | null = null;
  private episodeCounter = 0;

  constructor(private readonly cfg: PolicyTrainConfig, inputShape: [number, number]) {
    this.inputShape = inputShape;
    this.model = buildPolicyNetwork({
      height: inputShape[0],
      width: inputShape[1],
      seed: cfg.seed,
    });
    this.optimizer = tf.train.adam(cfg.ppo.learningRate);
    this.rand = mulberry32(cfg.seed);
    this.shuffle = seededShuffle(mulberry32(cfg.seed ^ 0x5851f42d));
  }

  private async resetSession(session: EnvSession): Promise<ObservationReply> {
    const mapId = this.cfg.mapIds[this.episodeCounter % this.cfg.mapIds.length];
    const seed = this.cfg.seed * 100_000 + this.episodeCounter;
    this.episodeCounter += 1;
    return session.reset({
      map_id: mapId,
      seed,
      coverage_target: this.cfg.coverageTarget,
      max_steps: this.cfg.maxSteps,
    });
  }

  /** Collect one fixed-length rollout; episodes roll over map ids. */
  async collectRollout(session: EnvSession): Promise<{
    transitions: Transition[];
    lastValue: number;
    coverages: number[];
    actions: number[];
  }> {
    const cfg = this.cfg;
    const transitions: Transition[] = [];
    const coverages: number[] = [];
    const actions: number[] = [];
    let reply = await this.resetSession(session);
    while (transitions.length < cfg.ppo.rolloutSteps) {
      const sample = observationState(reply);
      const stateTensor = imageToInput(
        Uint8Array.from(sample.state.map((v) => Math.round(v * 255))),
        sample.height,
        sample.width,
      );
      const output = evaluatePolicy(this.model, stateTensor);
      stateTensor.dispose();
      const action = sampleIndex(output.probs, this.rand);
      const stepReply = await session.step(action);
      actions.push(action);
      transitions.push({
        state: sample.state,
        action,
        reward: stepReply.reward ?? 0,
        done: stepReply.done,
        value: output.value,
        logProb: output.logProbs[action],
      });
      if (stepReply.done) {
        coverages.push(stepReply.coverage);
        reply = await this.resetSession(session);
      } else {
        reply = stepReply;
      }
    }
    // Bootstrap value for the state after the final transition.
    const sample = observationState(reply);
    const stateTensor = imageToInput(
      Uint8Array.from(sample.state.map((v) => Math.round(v * 255))),
      sample.height,
      sample.width,
    );
    const lastValue = evaluatePolicy(this.model, stateTensor).value;
    stateTensor.dispose();
    return { transitions, lastValue, coverages, actions };
  }

  update(transitions: Transition[], lastValue: number) {
    const { advantages, returns } = computeAdvantages(
      transitions,
      lastValue,
      this.cfg.ppo.gamma,
      this.cfg.ppo.gaeLambda,
    );
    const batch: RolloutBatch = {
      states: transitions.map((t) => t.state),
      actions: Int32Array.from(transitions.map((t) => t.action)),
      logProbs: Float32Array.from(transitions.map((t) => t.logProb)),
      advantages,
      returns,
    };
    return ppoUpdate(
      this.model,
      this.optimizer,
      batch,
      this.cfg.ppo,
      this.inputShape!,
      this.shuffle,
    );
  }

  /** Greedy-policy evaluation episodes; returns the coverage they reach. */
  async evaluate(session: EnvSession, episodes: number): Promise<number[]> {
    const coverages: number[] = [];
    for (let e = 0; e < episodes; e++) {
      let reply = await this.resetSession(session);
      while (!reply.done) {
        const sample = observationState(reply);
        const stateTensor = imageToInput(
          Uint8Array.from(sample.state.map((v) => Math.round(v * 255))),
          sample.height,
          sample.width,
        );
        const output = evaluatePolicy(this.model, stateTensor);
        stateTensor.dispose();
        let best = 0;
        for (let a = 1; a < output.probs.length; a++) {
          if (output.probs[a] > output.probs[best]) best = a;
        }
        reply = await session.step(best);
      }
      coverages.push(reply.coverage);
    }
    return coverages;
  }
}

/** Random-policy coverage baseline over the same protocol. */
export async function randomBaseline(
  session: EnvSession,
  mapIds: string[],
  episodes: number,
  coverageTarget: number,
  maxSteps: number,
  seed: number,
): Promise<number[]> {
  const rand = mulberry32(seed);
  const coverages: number[] = [];
  for (let e = 0; e < episodes; e++) {
    let reply = await session.reset({
      map_id: mapIds[e % mapIds.length],
      seed: seed * 100_000 + e,
      coverage_target: coverageTarget,
      max_steps: maxSteps,
    });
    while (!reply.done) {
      reply = await session.step(Math.floor(rand() * 8));
    }
    coverages.push(reply.coverage);
  }
  return coverages;
}

export async function trainPolicy(
  cfg: PolicyTrainConfig,
  inputShape: [number, number],
  outDir?: string,
  onIteration?: (report: IterationReport) => void,
): Promise<{ trainer: PolicyTrainer; reports: IterationReport[] }> {
  const trainer = new PolicyTrainer(cfg, inputShape);
  const session = new EnvSession(cfg.host, cfg.port);
  const reports: IterationReport[] = [];
  let envSteps = 0;
  let iteration = 0;
  try {
    while (envSteps < cfg.totalSteps) {
      const rollout = await trainer.collectRollout(session);
      envSteps += rollout.transitions.length;
      const stats = trainer.update(rollout.transitions, rollout.lastValue);
      const meanReward =
        rollout.transitions.reduce((acc, t) => acc + t.reward, 0) / rollout.transitions.length;
      const meanCoverage = rollout.coverages.length
        ? rollout.coverages.reduce((a, b) => a + b, 0) / rollout.coverages.length
        : 0;
      const report: IterationReport = {
        iteration,
        envSteps,
        meanReward,
        meanCoverage,
        ...stats,
      };
      reports.push(report);
      onIteration?.(report);
      iteration += 1;
    }
  } finally {
    await session.close();
  }
  if (outDir) {
    fs.mkdirSync(outDir, { recursive: true });
    const lines = ["iteration,env_steps,mean_reward,mean_coverage,policy_loss,value_loss,entropy"];
    for (const r of reports) {
      lines.push(
        `${r.iteration},${r.envSteps},${r.meanReward},${r.meanCoverage},${r.policyLoss},${r.valueLoss},${r.entropy}`,
      );
    }
    fs.writeFileSync(path.join(outDir, "learning_curve.csv"), lines.join("\n") + "\n");
  }
  return { trainer, reports };
}
