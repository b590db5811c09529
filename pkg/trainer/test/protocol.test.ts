import { describe, expect, inject, it } from "vitest";
import { frontierAction, imageToCells } from "../src/gridImage.js";
import { loadManifest, loadMap, mapFile } from "../src/maps.js";
import { EnvSession, decodeObservation } from "../src/protocol.js";

const HOST = "127.0.0.1";

describe("environment protocol", () => {
  it("resets, steps, renders and closes", async () => {
    const session = new EnvSession(HOST, inject("envPort"));
    const reset = await session.reset({ map_id: "two_0000", seed: 3 });
    expect(reset.step).toBe(0);
    expect(reset.done).toBe(false);
    expect(reset.coverage).toBeGreaterThan(0);
    const { height, width } = decodeObservation(reset);
    expect(height).toBe(22);
    expect(width).toBe(23);

    const step = await session.step(2);
    expect(step.step).toBe(1);
    expect(typeof step.reward).toBe("number");
    const render = await session.render();
    expect(render.step).toBe(1);
    expect(render.reward).toBeUndefined();
    await session.close();
  });

  it("raises protocol errors as exceptions", async () => {
    const session = new EnvSession(HOST, inject("envPort"));
    await expect(session.step(1)).rejects.toThrow(/no active episode/);
    await expect(session.reset({ map_id: "missing" })).rejects.toThrow(/unknown map id/);
    await session.close();
  });

  it("replays deterministically for one seed", async () => {
    const run = async () => {
      const session = new EnvSession(HOST, inject("envPort"));
      const rewards: number[] = [];
      let reply = await session.reset({ map_id: "two_0001", seed: 9, max_steps: 30 });
      for (let i = 0; i < 20 && !reply.done; i++) {
        reply = await session.step(i % 8);
        rewards.push(reply.reward!);
      }
      await session.close();
      return rewards;
    };
    expect(await run()).toEqual(await run());
  });

  it("decodes non-centered images into cells aligned with the map file", async () => {
    const session = new EnvSession(HOST, inject("envPort"));
    const reply = await session.reset({
      map_id: "two_0000",
      seed: 4,
      agent_centered: false,
    });
    const grid = imageToCells(reply);
    expect(grid.agent).toBeDefined();
    const truth = loadMap(mapFile(loadManifest(inject("datasetRoot")), "two_0000"));
    expect(grid.width).toBe(truth.width);
    expect(grid.height).toBe(truth.height);
    // Every observed (non-unknown) cell must agree with the ground truth.
    let observed = 0;
    for (let i = 0; i < grid.cells.length; i++) {
      if (grid.cells[i] === 2) continue;
      observed += 1;
      expect(grid.cells[i]).toBe(truth.wallMask[i] ? 1 : 0);
    }
    expect(observed).toBeGreaterThan(20);
    await session.close();
  });

  it("frontier chaser drives coverage on the live environment", async () => {
    const session = new EnvSession(HOST, inject("envPort"));
    let reply = await session.reset({
      map_id: "two_0000",
      seed: 7,
      coverage_target: 0.95,
      max_steps: 200,
      agent_centered: false,
    });
    const start = reply.coverage;
    while (!reply.done) {
      const action = frontierAction(imageToCells(reply));
      if (action === null) break;
      reply = await session.step(action);
    }
    expect(reply.coverage).toBeGreaterThan(start);
    expect(reply.success).toBe(true);
    await session.close();
  });
});
