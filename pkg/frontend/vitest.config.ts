import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // The end-to-end test shells out to the Python selection toolkit several
    // times; give it room well beyond the default per-test timeout.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
