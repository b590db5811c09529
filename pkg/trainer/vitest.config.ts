import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./test/globalSetup.ts"],
    testTimeout: 240_000,
    hookTimeout: 120_000,
    pool: "threads",
    poolOptions: { threads: { singleThread: true } },
  },
});
