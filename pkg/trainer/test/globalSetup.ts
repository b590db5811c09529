/**
 * Test fixtures: a tiny two-room dataset generated with the engine CLI and
 * one live environment server shared by every test file. The trainer talks
 * to the engine exclusively through its wire protocols and file formats.
 */
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import * as fs from "node:fs";
import * as net from "node:net";
import * as path from "node:path";
import type { TestProject } from "vitest/node";

const ROOT = path.resolve(__dirname, "..");
const FIXTURES = path.join(ROOT, ".test-fixtures");
const DATASET = path.join(FIXTURES, "two-room");

let server: ChildProcess | null = null;

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.listen(0, "127.0.0.1", () => {
      const port = (probe.address() as net.AddressInfo).port;
      probe.close(() => resolve(port));
    });
    probe.once("error", reject);
  });
}

async function waitForServer(port: number, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      await new Promise<void>((resolve, reject) => {
        const socket = net.createConnection({ host: "127.0.0.1", port }, () => {
          socket.destroy();
          resolve();
        });
        socket.once("error", reject);
      });
      return;
    } catch {
      await new Promise((r) => setTimeout(r, 150));
    }
  }
  throw new Error("environment server did not come up");
}

export default async function setup(project: TestProject): Promise<() => void> {
  fs.rmSync(FIXTURES, { recursive: true, force: true });
  fs.mkdirSync(FIXTURES, { recursive: true });
  // 21x20 interiors with min room side 10: exactly one vertical split, so
  // every map is a two-room floorplan; the wall-fraction band is disabled
  // via a tolerance of 1.
  execFileSync("python3", [
    "-m", "gridmapper.cli", "gen",
    "--count", "3",
    "--seed", "5",
    "--out", DATASET,
    "--name", "two",
    "--interior-width", "21",
    "--interior-height", "20",
    "--min-room-side", "10",
    "--wall-tolerance", "1",
  ]);
  const port = await freePort();
  server = spawn(
    "python3",
    ["-m", "gridmapper.cli", "serve", "--dataset", DATASET, "--port", String(port)],
    { stdio: ["ignore", "ignore", "inherit"] },
  );
  await waitForServer(port, 20_000);
  project.provide("envPort", port);
  project.provide("datasetRoot", DATASET);
  return () => {
    server?.kill();
    server = null;
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    envPort: number;
    datasetRoot: string;
  }
}
