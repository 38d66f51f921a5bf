// Scripted annotation flow against the real service on a synthetic dataset:
// draw 2 foreground + 2 background markers, save, train (bofp, 2 blocks),
// verify both block overlays render and the validation table populates, and
// that marker JSON round-trips byte-canonically.
//
// The flow drives the same store and API client the browser page uses; only
// the canvas rendering is absent (no browser binary in this environment).

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AppStore } from "../src/store.js";

const PORT = 8900 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;
const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47];

let workdir: string;
let server: ChildProcess | null = null;
let serverLog = "";

function pythonAvailable(): boolean {
  return spawnSync("python3", ["-c", "import flimsod"]).status === 0;
}

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/images`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error(`service did not come up on ${BASE}\n${serverLog}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
}

const haveBackend = pythonAvailable();

describe.skipIf(!haveBackend)("scripted annotation flow", () => {
  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "flimsod-ui-"));
    const dataset = join(workdir, "ds");
    const synth = spawnSync(
      "python3",
      ["-m", "flimsod.cli", "synth", "--out", dataset, "--seed", "11",
       "--images", "8", "--size", "128", "--marked", "1",
       "--object-area", "400", "900"],
      { encoding: "utf-8" },
    );
    if (synth.status !== 0) throw new Error(`synth failed: ${synth.stderr}`);

    server = spawn(
      "python3",
      ["-m", "flimsod.cli", "serve", "--dataset", dataset,
       "--port", `${PORT}`],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    server.stdout?.on("data", (chunk) => (serverLog += chunk));
    server.stderr?.on("data", (chunk) => (serverLog += chunk));
    await waitForServer();
  });

  afterAll(() => {
    server?.kill();
    if (workdir) rmSync(workdir, { recursive: true, force: true });
  });

  it("runs draw -> save -> train -> overlays -> scores", async () => {
    const api = new ApiClient(BASE);
    const store = new AppStore(api);

    await store.refreshImages();
    expect(store.images).toHaveLength(8);

    // mark a fresh image: 2 foreground + 2 background disks
    await store.openImage("img001");
    expect(store.markers).toEqual([]);
    store.draw(40, 40);
    store.draw(80, 80);
    store.toggleBrushLabel();
    store.draw(10, 10);
    store.draw(118, 118);
    expect(store.markers.filter((m) => m.label === "foreground")).toHaveLength(2);
    expect(store.markers.filter((m) => m.label === "background")).toHaveLength(2);
    await store.save();

    // the saved markers round-trip byte-canonically
    const raw = await fetch(`${BASE}/images/img001/markers`);
    expect(await raw.text()).toBe(store.canonicalJson());

    // a page reload would see the same markers
    await store.openImage("img001");
    expect(store.markers).toHaveLength(4);
    expect(store.dirty).toBe(false);

    // train a 2-block bofp model and wait through the polling path
    const status = await store.trainAndRefresh({
      mode: "bofp",
      seed: 5,
      blockspecs: [{ kernels_per_marker: 2 }, { kernels_per_marker: 2 }],
    });
    expect(status.status).toBe("done");
    expect(store.modelDepth).toBe(2);

    // both block overlays render as PNGs, plus the refined variant
    for (const block of [1, 2]) {
      const { bytes, stale } = await api.fetchOverlayBytes("img001", {
        kind: "saliency",
        block,
      });
      const head = [...new Uint8Array(bytes.slice(0, 4))];
      expect(head).toEqual(PNG_MAGIC);
      expect(bytes.byteLength).toBeGreaterThan(100);
      expect(stale).toBe(false);
    }
    const refined = await api.fetchOverlayBytes("img001", {
      kind: "refined",
      block: 2,
    });
    expect([...new Uint8Array(refined.bytes.slice(0, 4))]).toEqual(PNG_MAGIC);

    // the validation table populates: 8 images minus 2 in training
    const rows = store.scoreRows();
    expect(rows).toHaveLength(6);
    for (const row of rows) {
      expect(row.f_beta).toBeGreaterThanOrEqual(0);
      expect(row.f_beta).toBeLessThanOrEqual(1);
    }
    expect(store.suggestion).toBe(rows[0].id); // worst scorer is suggested

    // marker edits after training flag the model stale on the overlay path
    store.draw(60, 60);
    await store.save();
    const after = await api.fetchOverlayBytes("img001", {
      kind: "saliency",
      block: 1,
    });
    expect(after.stale).toBe(true);
  });
});
