export type MarkerLabel = "foreground" | "background";

export interface Marker {
  id: number;
  x: number;
  y: number;
  radius: number;
  label: MarkerLabel;
}

export interface MarkerSet {
  image: string;
  markers: Marker[];
}

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
  marked: boolean;
  has_gt: boolean;
  is_training: boolean;
}

export interface ImageListing {
  images: ImageInfo[];
  model_stale: boolean;
}

export interface TrainStatus {
  status: "idle" | "running" | "done" | "failed";
  job_id: string | null;
  stages: Record<string, number>;
  error: string | null;
  model_stale: boolean;
  model_depth: number;
}

export interface ImageScore {
  f_beta: number;
  mae: number;
}

export interface ValidationScores {
  scores: Record<string, ImageScore>;
  model_stale: boolean;
  trained: boolean;
}

export type OverlayKind = "none" | "saliency" | "refined";

export interface OverlaySelection {
  kind: OverlayKind;
  block: number; // 1-based; ignored when kind === "none"
}
