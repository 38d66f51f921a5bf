import { defineConfig } from "vitest/config";

export default defineConfig({
  resolve: {
    // browser-style ".js" specifiers in src/ resolve back to the .ts sources
    alias: [{ find: /^(\.{1,2}\/.*)\.js$/, replacement: "$1" }],
  },
  test: {
    environment: "node",
    testTimeout: 180_000,
    hookTimeout: 240_000,
  },
});
