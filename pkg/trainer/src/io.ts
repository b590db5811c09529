/**
 * Filesystem checkpointing for tfjs layer models: plain tfjs in Node has no
 * file:// handler, so topology/specs go to JSON and weights to a binary blob.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      fs.writeFileSync(
        path.join(dir, "model.json"),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
          format: artifacts.format,
          generatedBy: artifacts.generatedBy,
        }),
      );
      const weights = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(weights));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
    }),
  );
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, "model.json"), "utf-8"));
  const weights = fs.readFileSync(path.join(dir, "weights.bin"));
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: meta.modelTopology,
      weightSpecs: meta.weightSpecs,
      weightData: weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength),
    }),
  );
}
