import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";
import {
  DECODER_LAYERS,
  ENCODER_LAYERS,
  buildPredictorNetwork,
  paddedSize,
  predictProbabilities,
} from "../src/predictorModel.js";
import { mulberry32 } from "../src/rng.js";

describe("map-completion autoencoder", () => {
  const spec = { height: 32, width: 32, channels: 4, seed: 2 };

  it("is symmetric: eleven encoder and eleven decoder layers with skips", () => {
    const model = buildPredictorNetwork(spec);
    const classes = model.layers.map((l) => l.getClassName());
    const convs = classes.filter((c) => c === "Conv2D").length;
    const deconvs = classes.filter((c) => c === "Conv2DTranspose").length;
    const skips = classes.filter((c) => c === "Concatenate").length;
    expect(convs).toBe(ENCODER_LAYERS);
    expect(deconvs).toBe(DECODER_LAYERS);
    expect(skips).toBe(DECODER_LAYERS); // every decoder layer taps the encoder
  });

  it("output shape equals input shape", () => {
    const model = buildPredictorNetwork(spec);
    const x = tf.zeros([2, spec.height, spec.width, 3]) as tf.Tensor4D;
    const y = model.predict(x) as tf.Tensor4D;
    expect(y.shape).toEqual([2, spec.height, spec.width, 1]);
    x.dispose();
    y.dispose();
  });

  it("fuzzed observations produce finite probabilities in [0, 1]", () => {
    const model = buildPredictorNetwork(spec);
    const rand = mulberry32(9);
    for (let trial = 0; trial < 5; trial++) {
      const h = 10 + Math.floor(rand() * 20);
      const w = 10 + Math.floor(rand() * 20);
      const cells = Uint8Array.from({ length: h * w }, () => Math.floor(rand() * 3));
      // The model is built for padded 32x32 inputs; skip shapes beyond it.
      const [ph, pw] = paddedSize(h, w);
      if (ph !== spec.height || pw !== spec.width) continue;
      const probs = predictProbabilities(model, cells, h, w);
      expect(probs.length).toBe(h * w);
      for (const p of probs) {
        expect(Number.isFinite(p)).toBe(true);
        expect(p).toBeGreaterThanOrEqual(0);
        expect(p).toBeLessThanOrEqual(1);
      }
    }
  });

  it("pads awkward dimensions up to the stride multiple", () => {
    expect(paddedSize(22, 23)).toEqual([32, 32]);
    expect(paddedSize(32, 32)).toEqual([32, 32]);
    expect(paddedSize(33, 1)).toEqual([48, 16]);
  });
});
