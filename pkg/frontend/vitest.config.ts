import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every test shells out to the engine CLI (python startup per call)
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
