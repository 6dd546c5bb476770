import { defineConfig } from "vitest/config";

export default defineConfig({
  server: {
    proxy: {
      "/checkpoints": "http://127.0.0.1:8000",
      "/sessions": {
        target: "http://127.0.0.1:8000",
        ws: true,
      },
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
