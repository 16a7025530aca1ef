import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // The integration test boots the Python service and runs real recoveries.
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
