/** Small deterministic RNG so rollouts and sampling are reproducible. */

/** Mulberry32: fast 32-bit PRNG with a single-word state. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Sample an index from unnormalized probabilities. */
export function sampleIndex(probs: Float32Array | number[], rand: () => number): number {
  let total = 0;
  for (let i = 0; i < probs.length; i++) total += probs[i];
  let r = rand() * total;
  for (let i = 0; i < probs.length; i++) {
    r -= probs[i];
    if (r <= 0) return i;
  }
  return probs.length - 1;
}
