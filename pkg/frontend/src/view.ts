// Zoom/pan viewport math. Image and overlay share one transform, so overlay
// pixels stay aligned 1:1 with image pixels at every zoom, and exported
// marker coordinates are exact image pixels regardless of the view.

export interface Viewport {
  zoom: number; // screen pixels per image pixel
  panX: number; // screen position of image pixel (0, 0)
  panY: number;
}

export const ZOOM_LEVELS = [0.25, 0.5, 0.75, 1, 1.5, 2, 3, 4, 6, 8];

export function imageToScreen(v: Viewport, x: number, y: number): [number, number] {
  return [x * v.zoom + v.panX, y * v.zoom + v.panY];
}

export function screenToImage(v: Viewport, sx: number, sy: number): [number, number] {
  return [(sx - v.panX) / v.zoom, (sy - v.panY) / v.zoom];
}

/** Image pixel under a screen position (what a click annotates). */
export function pickPixel(v: Viewport, sx: number, sy: number): [number, number] {
  const [x, y] = screenToImage(v, sx, sy);
  return [Math.floor(x), Math.floor(y)];
}

export function zoomAround(v: Viewport, sx: number, sy: number, nextZoom: number): Viewport {
  // keep the image point under the cursor fixed on screen
  const [ix, iy] = screenToImage(v, sx, sy);
  return {
    zoom: nextZoom,
    panX: sx - ix * nextZoom,
    panY: sy - iy * nextZoom,
  };
}

export function zoomStep(v: Viewport, sx: number, sy: number, direction: 1 | -1): Viewport {
  const idx = ZOOM_LEVELS.findIndex((z) => z >= v.zoom - 1e-9);
  const next = ZOOM_LEVELS[Math.min(Math.max(idx + direction, 0), ZOOM_LEVELS.length - 1)];
  return zoomAround(v, sx, sy, next);
}

export function pan(v: Viewport, dx: number, dy: number): Viewport {
  return { ...v, panX: v.panX + dx, panY: v.panY + dy };
}

/** Viewport that fits an image into a screen area at an exact zoom level. */
export function fit(width: number, height: number, screenW: number, screenH: number): Viewport {
  const raw = Math.min(screenW / width, screenH / height);
  const zoom = [...ZOOM_LEVELS].reverse().find((z) => z <= raw) ?? ZOOM_LEVELS[0];
  return {
    zoom,
    panX: (screenW - width * zoom) / 2,
    panY: (screenH - height * zoom) / 2,
  };
}
