// Marker-set model shared by the canvas and the save path.

import type { Marker, MarkerLabel, MarkerSet } from "./types.js";

export const DEFAULT_RADIUS = 3.0;

/** Next free marker id (ids stay unique per image, never reused downward). */
export function nextId(markers: Marker[]): number {
  return markers.reduce((acc, m) => Math.max(acc, m.id), 0) + 1;
}

export function addMarker(
  markers: Marker[],
  x: number,
  y: number,
  label: MarkerLabel,
  radius: number = DEFAULT_RADIUS,
): Marker[] {
  const marker: Marker = {
    id: nextId(markers),
    x: Math.round(x),
    y: Math.round(y),
    radius,
    label,
  };
  return [...markers, marker];
}

/** Markers whose disk covers (x, y), nearest center first. */
export function markersAt(markers: Marker[], x: number, y: number): Marker[] {
  return markers
    .filter((m) => (m.x - x) ** 2 + (m.y - y) ** 2 <= m.radius ** 2)
    .sort(
      (a, b) =>
        (a.x - x) ** 2 + (a.y - y) ** 2 - ((b.x - x) ** 2 + (b.y - y) ** 2),
    );
}

export function eraseAt(markers: Marker[], x: number, y: number): Marker[] {
  const hit = markersAt(markers, x, y)[0];
  if (!hit) return markers;
  return markers.filter((m) => m.id !== hit.id);
}

export function validateMarkers(
  set: MarkerSet,
  width: number,
  height: number,
): string[] {
  const errors: string[] = [];
  const seen = new Set<number>();
  set.markers.forEach((m, i) => {
    if (seen.has(m.id)) errors.push(`markers[${i}]: duplicate id ${m.id}`);
    seen.add(m.id);
    if (m.radius <= 0) errors.push(`markers[${i}]: radius must be positive`);
    if (m.x < 0 || m.x >= width || m.y < 0 || m.y >= height)
      errors.push(`markers[${i}]: center (${m.x}, ${m.y}) outside ${width}x${height}`);
    if (m.label !== "foreground" && m.label !== "background")
      errors.push(`markers[${i}]: bad label`);
  });
  return errors;
}

/** Python repr of a float: integral values keep a trailing ".0". */
function formatFloat(value: number): string {
  return Number.isInteger(value) ? `${value}.0` : `${value}`;
}

/**
 * Canonical serialization, byte-identical to the server's: keys sorted,
 * two-space indent, markers ordered by id, trailing newline.
 */
export function canonicalMarkerJson(set: MarkerSet): string {
  const markers = [...set.markers].sort((a, b) => a.id - b.id);
  const lines: string[] = ["{"];
  lines.push(`  "image": ${JSON.stringify(set.image)},`);
  if (markers.length === 0) {
    lines.push('  "markers": []');
  } else {
    lines.push('  "markers": [');
    markers.forEach((m, i) => {
      lines.push("    {");
      lines.push(`      "id": ${m.id},`);
      lines.push(`      "label": ${JSON.stringify(m.label)},`);
      lines.push(`      "radius": ${formatFloat(m.radius)},`);
      lines.push(`      "x": ${m.x},`);
      lines.push(`      "y": ${m.y}`);
      lines.push(i < markers.length - 1 ? "    }," : "    }");
    });
    lines.push("  ]");
  }
  lines.push("}");
  return lines.join("\n") + "\n";
}
