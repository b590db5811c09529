/**
 * Trainer command line: PPO policy training against a running environment
 * server, predictor dataset collection and training, and the predictor
 * server. Desk-scale by design; see the package README for full runs.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { collectObservations, DEFAULT_COLLECT } from "./dataset.js";
import { loadModel, saveModel } from "./io.js";
import { loadManifest } from "./maps.js";
import { DEFAULT_PPO } from "./ppo.js";
import { PredictorServer, modelPredictFn } from "./predictorServer.js";
import { EnvSession } from "./protocol.js";
import { decodeObservation } from "./protocol.js";
import { DEFAULT_PREDICTOR_TRAIN, trainPredictor } from "./trainPredictor.js";
import { randomBaseline, trainPolicy } from "./trainPolicy.js";

async function probeShape(host: string, port: number, mapId: string): Promise<[number, number]> {
  const session = new EnvSession(host, port);
  try {
    const reply = await session.reset({ map_id: mapId, seed: 0, max_steps: 1 });
    const { height, width } = decodeObservation(reply);
    return [height, width];
  } finally {
    await session.close();
  }
}

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command("train-policy", "train the PPO motion planner over the wire protocol", (y) =>
      y
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("port", { type: "number", default: 7777 })
        .option("dataset", { type: "string", demandOption: true })
        .option("coverage-target", { type: "number", default: 0.85 })
        .option("max-steps", { type: "number", default: 200 })
        .option("total-steps", { type: "number", default: 100_000 })
        .option("rollout", { type: "number", default: DEFAULT_PPO.rolloutSteps })
        .option("seed", { type: "number", default: 1 })
        .option("out", { type: "string", demandOption: true }),
    )
    .command("collect", "collect predictor training observations", (y) =>
      y
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("port", { type: "number", default: 7777 })
        .option("dataset", { type: "string", demandOption: true })
        .option("episodes", { type: "number", default: 64 })
        .option("steps", { type: "number", default: 120 })
        .option("seed", { type: "number", default: 1 })
        .option("out", { type: "string", demandOption: true }),
    )
    .command("train-predictor", "train the map-completion autoencoder", (y) =>
      y
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("port", { type: "number", default: 7777 })
        .option("dataset", { type: "string", demandOption: true })
        .option("episodes", { type: "number", default: 64 })
        .option("steps", { type: "number", default: 120 })
        .option("epochs", { type: "number", default: DEFAULT_PREDICTOR_TRAIN.epochs })
        .option("channels", { type: "number", default: DEFAULT_PREDICTOR_TRAIN.channels })
        .option("seed", { type: "number", default: 3 })
        .option("out", { type: "string", demandOption: true }),
    )
    .command("serve-predictor", "serve a trained predictor over the wire protocol", (y) =>
      y
        .option("checkpoint", { type: "string", demandOption: true })
        .option("host", { type: "string", default: "127.0.0.1" })
        .option("port", { type: "number", default: 7900 }),
    )
    .demandCommand(1)
    .strict()
    .parse();

  const command = argv._[0];
  if (command === "train-policy") {
    const dataset = loadManifest(argv.dataset as string);
    const shape = await probeShape(argv.host as string, argv.port as number, dataset.mapIds[0]);
    const { trainer, reports } = await trainPolicy(
      {
        host: argv.host as string,
        port: argv.port as number,
        mapIds: dataset.mapIds,
        coverageTarget: argv["coverage-target"] as number,
        maxSteps: argv["max-steps"] as number,
        totalSteps: argv["total-steps"] as number,
        evalEpisodes: 10,
        seed: argv.seed as number,
        ppo: { ...DEFAULT_PPO, rolloutSteps: argv.rollout as number },
      },
      shape,
      argv.out as string,
      (report) =>
        console.error(
          `iter ${report.iteration} steps ${report.envSteps} ` +
            `reward ${report.meanReward.toFixed(3)} coverage ${report.meanCoverage.toFixed(3)}`,
        ),
    );
    await saveModel(trainer.model, path.join(argv.out as string, "policy"));
    const session = new EnvSession(argv.host as string, argv.port as number);
    const baseline = await randomBaseline(
      session,
      dataset.mapIds,
      10,
      argv["coverage-target"] as number,
      argv["max-steps"] as number,
      (argv.seed as number) + 999,
    );
    await session.close();
    const baselineMean = baseline.reduce((a, b) => a + b, 0) / baseline.length;
    console.error(
      `random baseline coverage ${baselineMean.toFixed(3)}; ` +
        `final training coverage ${reports.at(-1)?.meanCoverage.toFixed(3)}`,
    );
    return 0;
  }
  if (command === "collect" || command === "train-predictor") {
    const dataset = loadManifest(argv.dataset as string);
    const samples = await collectObservations(dataset, {
      ...DEFAULT_COLLECT,
      host: argv.host as string,
      port: argv.port as number,
      episodes: argv.episodes as number,
      stepsPerEpisode: argv.steps as number,
      seed: argv.seed as number,
    });
    console.error(`collected ${samples.length} observation snapshots`);
    if (command === "collect") {
      fs.mkdirSync(argv.out as string, { recursive: true });
      const payload = samples.map((s) => ({
        map_id: s.mapId,
        width: s.width,
        height: s.height,
        cells: Buffer.from(s.cells).toString("base64"),
      }));
      fs.writeFileSync(
        path.join(argv.out as string, "samples.json"),
        JSON.stringify(payload),
      );
      return 0;
    }
    const { model, reports } = await trainPredictor(
      samples,
      {
        ...DEFAULT_PREDICTOR_TRAIN,
        epochs: argv.epochs as number,
        channels: argv.channels as number,
        seed: argv.seed as number,
      },
      (report) =>
        console.error(
          `epoch ${report.epoch} loss ${report.loss.toFixed(4)} ` +
            `validation F1 ${report.validationF1.toFixed(4)}`,
        ),
    );
    await saveModel(model, path.join(argv.out as string, "predictor"));
    const lines = ["epoch,loss,validation_f1"];
    for (const r of reports) lines.push(`${r.epoch},${r.loss},${r.validationF1}`);
    fs.mkdirSync(argv.out as string, { recursive: true });
    fs.writeFileSync(path.join(argv.out as string, "predictor_curve.csv"), lines.join("\n") + "\n");
    return 0;
  }
  if (command === "serve-predictor") {
    const model = await loadModel(argv.checkpoint as string);
    const server = new PredictorServer(modelPredictFn(model));
    const port = await server.listen(argv.host as string, argv.port as number);
    console.error(`predictor serving on ${argv.host}:${port}`);
    await new Promise(() => undefined); // run until killed
    return 0;
  }
  throw new Error(`unknown command ${command}`);
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err);
    process.exit(1);
  },
);
