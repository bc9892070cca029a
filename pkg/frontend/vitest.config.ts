import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
    // the e2e suite is stateful (one service, sequential scenario)
    fileParallelism: false,
  },
});
