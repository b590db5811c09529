/**
 * ASCII map and dataset-manifest readers (the engine's on-disk formats),
 * used to pair protocol observations with ground truth for supervised
 * predictor training.
 */
import * as fs from "node:fs";
import * as path from "node:path";

export const MANIFEST_HEADER = "GRIDMAP-DATASET v1";

export interface GroundTruth {
  width: number;
  height: number;
  /** 1 where the cell is a wall or exterior, 0 where free. */
  wallMask: Uint8Array;
  /** 1 for interior (free or wall) cells inside the contour. */
  interiorMask: Uint8Array;
}

export function parseMap(text: string): GroundTruth {
  const lines = text.split("\n").filter((line, i) => line.length > 0 || i === 0);
  const [w, h] = lines[0].split(" ").map(Number);
  if (!Number.isInteger(w) || !Number.isInteger(h)) {
    throw new Error(`bad map header: ${lines[0]}`);
  }
  const wallMask = new Uint8Array(w * h);
  const interiorMask = new Uint8Array(w * h);
  for (let y = 0; y < h; y++) {
    const row = lines[1 + y];
    if (row === undefined || row.length !== w) {
      throw new Error(`bad map row ${y + 1}`);
    }
    for (let x = 0; x < w; x++) {
      const ch = row[x];
      const i = y * w + x;
      if (ch === "#") {
        wallMask[i] = 1;
        interiorMask[i] = 1;
      } else if (ch === ".") {
        interiorMask[i] = 1;
      } else if (ch === "~") {
        wallMask[i] = 1; // exterior is sensed as wall
      } else {
        throw new Error(`bad map character ${ch} at (${x}, ${y})`);
      }
    }
  }
  return { width: w, height: h, wallMask, interiorMask };
}

export function loadMap(file: string): GroundTruth {
  return parseMap(fs.readFileSync(file, "utf-8"));
}

export interface Dataset {
  root: string;
  mapIds: string[];
}

export function loadManifest(root: string): Dataset {
  const text = fs.readFileSync(path.join(root, "manifest.txt"), "utf-8");
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines[0] !== MANIFEST_HEADER) {
    throw new Error(`unexpected manifest header: ${lines[0]}`);
  }
  return {
    root,
    mapIds: lines.slice(1).map((entry) => path.basename(entry, ".map")),
  };
}

export function mapFile(dataset: Dataset, mapId: string): string {
  return path.join(dataset.root, `${mapId}.map`);
}
