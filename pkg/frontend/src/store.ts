// Application state and transitions, kept free of DOM so the annotation flow
// can run headlessly (tests) exactly as it runs in the page.

import { addMarker, canonicalMarkerJson, eraseAt, validateMarkers } from "./markers.js";
import type { ApiClient } from "./api.js";
import type {
  ImageInfo,
  Marker,
  MarkerLabel,
  OverlaySelection,
  TrainStatus,
  ValidationScores,
} from "./types.js";

export interface BrushState {
  label: MarkerLabel;
  radius: number;
}

export class AppStore {
  images: ImageInfo[] = [];
  activeImage: ImageInfo | null = null;
  markers: Marker[] = [];
  dirty = false; // unsaved marker edits
  brush: BrushState = { label: "foreground", radius: 3.0 };
  overlay: OverlaySelection = { kind: "none", block: 1 };
  overlayOpacity = 0.5;
  modelStale = false;
  modelDepth = 0;
  training: TrainStatus | null = null;
  scores: ValidationScores | null = null;
  suggestion: string | null = null;

  constructor(public api: ApiClient) {}

  async refreshImages(): Promise<void> {
    const listing = await this.api.listImages();
    this.images = listing.images;
    this.modelStale = listing.model_stale;
  }

  async openImage(id: string): Promise<void> {
    const info = this.images.find((e) => e.id === id);
    if (!info) throw new Error(`unknown image ${id}`);
    this.activeImage = info;
    const set = await this.api.getMarkers(id);
    this.markers = set.markers;
    this.dirty = false;
  }

  draw(x: number, y: number): void {
    if (!this.activeImage) return;
    const { width, height } = this.activeImage;
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    this.markers = addMarker(this.markers, x, y, this.brush.label, this.brush.radius);
    this.dirty = true;
  }

  erase(x: number, y: number): void {
    const next = eraseAt(this.markers, x, y);
    if (next !== this.markers) {
      this.markers = next;
      this.dirty = true;
    }
  }

  toggleBrushLabel(): void {
    this.brush.label = this.brush.label === "foreground" ? "background" : "foreground";
  }

  markerSet() {
    return { image: this.activeImage?.id ?? "", markers: this.markers };
  }

  canonicalJson(): string {
    return canonicalMarkerJson(this.markerSet());
  }

  async save(): Promise<void> {
    if (!this.activeImage) throw new Error("no image open");
    const set = this.markerSet();
    const errors = validateMarkers(set, this.activeImage.width, this.activeImage.height);
    if (errors.length) throw new Error(errors.join("; "));
    await this.api.putMarkers(set);
    this.dirty = false;
    await this.refreshImages();
    this.modelStale = true; // server invalidates the model on marker writes
  }

  async trainAndRefresh(body: Parameters<ApiClient["startTraining"]>[0] = {}): Promise<TrainStatus> {
    await this.api.startTraining(body);
    const status = await this.api.waitForTraining();
    this.training = status;
    this.modelStale = status.model_stale;
    this.modelDepth = status.model_depth;
    if (status.status === "done") {
      await this.reviewValidation();
    }
    return status;
  }

  async reviewValidation(): Promise<ValidationScores> {
    this.scores = await this.api.validationScores();
    this.suggestion = (await this.api.suggestNext()).suggestion;
    return this.scores;
  }

  /** Validation rows sorted worst-first, the review order of the loop. */
  scoreRows(): { id: string; f_beta: number; mae: number }[] {
    if (!this.scores) return [];
    return Object.entries(this.scores.scores)
      .map(([id, s]) => ({ id, f_beta: s.f_beta, mae: s.mae }))
      .sort((a, b) => a.f_beta - b.f_beta || a.id.localeCompare(b.id));
  }

  selectOverlay(kind: OverlaySelection["kind"], block?: number): void {
    const depth = Math.max(this.modelDepth, 1);
    this.overlay = {
      kind,
      block: Math.min(Math.max(block ?? this.overlay.block, 1), depth),
    };
  }
}
