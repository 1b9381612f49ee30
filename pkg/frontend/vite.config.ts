import { defineConfig } from "vitest/config";

// Served by the job service under /ui, so asset URLs must stay relative.
export default defineConfig({
  base: "./",
  build: {
    outDir: "dist",
    emptyOutDir: true,
  },
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
  },
});
