// Thin typed client over the local service; the UI's only coupling to the core.

import type {
  ImageListing,
  MarkerSet,
  OverlaySelection,
  TrainStatus,
  ValidationScores,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(body)}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) throw new ApiError(response.status, body);
  return body as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  async listImages(): Promise<ImageListing> {
    return asJson(await fetch(`${this.base}/images`));
  }

  imageUrl(id: string): string {
    return `${this.base}/images/${encodeURIComponent(id)}`;
  }

  overlayUrl(id: string, selection: OverlaySelection, cacheKey: string): string {
    const refined = selection.kind === "refined";
    return (
      `${this.base}/images/${encodeURIComponent(id)}/saliency` +
      `?block=${selection.block}&refined=${refined}&v=${cacheKey}`
    );
  }

  async getMarkers(id: string): Promise<MarkerSet> {
    return asJson(await fetch(`${this.base}/images/${encodeURIComponent(id)}/markers`));
  }

  async putMarkers(set: MarkerSet): Promise<{ marker_version: number }> {
    const response = await fetch(
      `${this.base}/images/${encodeURIComponent(set.image)}/markers`,
      {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(set),
      },
    );
    return asJson(response);
  }

  async startTraining(body: {
    mode?: string;
    seed?: number;
    blockspecs?: Record<string, number | string>[];
  }): Promise<{ job_id: string }> {
    const response = await fetch(`${this.base}/train`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return asJson(response);
  }

  async trainStatus(): Promise<TrainStatus> {
    return asJson(await fetch(`${this.base}/train/status`));
  }

  /** Poll until the running job settles; resolves with the final status. */
  async waitForTraining(pollMs = 250, timeoutMs = 300_000): Promise<TrainStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.trainStatus();
      if (status.status === "done" || status.status === "failed") return status;
      if (Date.now() > deadline) throw new Error("training timed out");
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  async validationScores(): Promise<ValidationScores> {
    return asJson(await fetch(`${this.base}/validation/scores`));
  }

  async suggestNext(): Promise<{ suggestion: string | null }> {
    return asJson(await fetch(`${this.base}/suggest-next`));
  }

  /** Fetch an overlay PNG; resolves to the raw bytes (tests) or a blob URL. */
  async fetchOverlayBytes(
    id: string,
    selection: OverlaySelection,
  ): Promise<{ bytes: ArrayBuffer; stale: boolean }> {
    const response = await fetch(this.overlayUrl(id, selection, `${Date.now()}`));
    if (!response.ok) throw new ApiError(response.status, await response.json());
    return {
      bytes: await response.arrayBuffer(),
      stale: response.headers.get("x-model-stale") === "true",
    };
  }
}
