/**
 * Decoding of rendered state images into three-valued cell grids, plus a
 * small scripted explorer used to harvest structured partial observations
 * without touching engine internals.
 */
import { CELL_FREE, CELL_OBSTACLE, CELL_UNKNOWN, ObservationReply, decodeObservation } from "./protocol.js";

/** State-image gray levels (see the engine's protocol reference). */
export const GRAY_FREE = 0;
export const GRAY_UNKNOWN = 15;
export const GRAY_OBSTACLE = 30;
export const GRAY_AGENT = 255;

export interface CellGrid {
  width: number;
  height: number;
  /** Row-major cell classes: 0 free, 1 obstacle, 2 unknown. */
  cells: Uint8Array;
  /** Agent position, when the image carried one. */
  agent?: { x: number; y: number };
}

/** Convert a non-centered rendered image into cell classes. */
export function imageToCells(reply: ObservationReply): CellGrid {
  const { data, height, width } = decodeObservation(reply);
  const cells = new Uint8Array(width * height);
  let agent: { x: number; y: number } | undefined;
  for (let i = 0; i < data.length; i++) {
    const value = data[i];
    if (value === GRAY_AGENT) {
      agent = { x: i % width, y: Math.floor(i / width) };
      cells[i] = CELL_FREE; // the agent stands on observed free space
    } else if (value === GRAY_FREE) {
      cells[i] = CELL_FREE;
    } else if (value === GRAY_OBSTACLE) {
      cells[i] = CELL_OBSTACLE;
    } else if (value === GRAY_UNKNOWN) {
      cells[i] = CELL_UNKNOWN;
    } else {
      throw new Error(`unexpected gray level ${value}`);
    }
  }
  return { width, height, cells, agent };
}

const DX = [0, 1, 1, 1, 0, -1, -1, -1]; // actions 0..7, clockwise from North
const DY = [-1, -1, 0, 1, 1, 1, 0, -1];

/**
 * Greedy frontier chaser on decoded images: walks toward the nearest
 * observed-free cell bordering unknown space. Breadth-first over the known
 * free cells, diagonal corner cutting avoided like the engine's planner.
 */
export function frontierAction(grid: CellGrid): number | null {
  const { width, height, cells, agent } = grid;
  if (!agent) throw new Error("image carries no agent position");
  const free = (x: number, y: number) =>
    x >= 0 && x < width && y >= 0 && y < height && cells[y * width + x] === CELL_FREE;
  const isFrontier = (x: number, y: number): boolean => {
    for (let d = 0; d < 8; d++) {
      const nx = x + DX[d];
      const ny = y + DY[d];
      if (nx >= 0 && nx < width && ny >= 0 && ny < height && cells[ny * width + nx] === CELL_UNKNOWN) {
        return true;
      }
    }
    return false;
  };
  // BFS from the agent; the first frontier cell reached is the target, and
  // the first move of its path is the action.
  const firstMove = new Int8Array(width * height).fill(-1);
  const visited = new Uint8Array(width * height);
  const queue: number[] = [agent.y * width + agent.x];
  visited[queue[0]] = 1;
  let head = 0;
  while (head < queue.length) {
    const index = queue[head++];
    const x = index % width;
    const y = Math.floor(index / width);
    if (isFrontier(x, y) && index !== agent.y * width + agent.x) {
      return firstMove[index];
    }
    for (let d = 0; d < 8; d++) {
      const nx = x + DX[d];
      const ny = y + DY[d];
      if (!free(nx, ny)) continue;
      if (DX[d] !== 0 && DY[d] !== 0 && !(free(x + DX[d], y) && free(x, y + DY[d]))) continue;
      const next = ny * width + nx;
      if (visited[next]) continue;
      visited[next] = 1;
      firstMove[next] = firstMove[index] >= 0 ? firstMove[index] : d;
      queue.push(next);
    }
  }
  return null; // nothing reachable borders unknown space
}
