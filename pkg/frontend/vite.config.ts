import { defineConfig } from "vitest/config";

export default defineConfig({
  base: "./",
  server: {
    proxy: {
      // during development the API runs separately via `flowtwin serve`
      "/network": "http://127.0.0.1:8765",
      "/scenarios": "http://127.0.0.1:8765",
      "/runs": "http://127.0.0.1:8765",
    },
  },
  test: {
    environment: "jsdom",
    testTimeout: 120000,
    hookTimeout: 120000,
  },
});
