/**
 * Supervised training pairs for the map predictor, harvested from live
 * environment sessions: partial observations are snapshotted while scripted
 * agents explore, and ground truth comes from the dataset's map files.
 * Half the episodes wander randomly, half chase frontiers, so the network
 * sees both aimless and structured exposure patterns.
 */
import { frontierAction, imageToCells } from "./gridImage.js";
import { Dataset, GroundTruth, loadMap, mapFile } from "./maps.js";
import { EnvSession } from "./protocol.js";
import { mulberry32 } from "./rng.js";

export interface ObservationSample {
  mapId: string;
  width: number;
  height: number;
  cells: Uint8Array; // partial observation, row-major cell classes
  truth: GroundTruth;
}

export interface CollectConfig {
  host: string;
  port: number;
  episodes: number;
  stepsPerEpisode: number;
  snapshotEvery: number;
  seed: number;
}

export const DEFAULT_COLLECT: CollectConfig = {
  host: "127.0.0.1",
  port: 7777,
  episodes: 8,
  stepsPerEpisode: 60,
  snapshotEvery: 15,
  seed: 1,
};

/** Collect observation snapshots by driving episodes over the protocol. */
export async function collectObservations(
  dataset: Dataset,
  cfg: CollectConfig,
): Promise<ObservationSample[]> {
  const rand = mulberry32(cfg.seed);
  const samples: ObservationSample[] = [];
  const truths = new Map<string, GroundTruth>();
  for (let episode = 0; episode < cfg.episodes; episode++) {
    const mapId = dataset.mapIds[episode % dataset.mapIds.length];
    let truth = truths.get(mapId);
    if (!truth) {
      truth = loadMap(mapFile(dataset, mapId));
      truths.set(mapId, truth);
    }
    const session = new EnvSession(cfg.host, cfg.port);
    try {
      let reply = await session.reset({
        map_id: mapId,
        seed: cfg.seed * 1000 + episode,
        coverage_target: 1.0,
        max_steps: cfg.stepsPerEpisode,
        agent_centered: false,
      });
      const useFrontier = episode % 2 === 1;
      for (let step = 0; step < cfg.stepsPerEpisode && !reply.done; step++) {
        const grid = imageToCells(reply);
        let action: number | null = useFrontier ? frontierAction(grid) : null;
        if (action === null) action = Math.floor(rand() * 8);
        reply = await session.step(action);
        if ((step + 1) % cfg.snapshotEvery === 0 || reply.done) {
          const snapshot = imageToCells(reply);
          samples.push({
            mapId,
            width: snapshot.width,
            height: snapshot.height,
            cells: snapshot.cells,
            truth,
          });
        }
      }
    } finally {
      await session.close();
    }
  }
  return samples;
}
