/** Pose-to-tile mapping and set overlap, matching the simulator's convention. */

export interface TileGrid {
    tilesH: number;
    tilesV: number;
    fovDeg: number;
}

export const DEFAULT_GRID: TileGrid = { tilesH: 20, tilesV: 10, fovDeg: 100 };

export function wrapAngle(deg: number): number {
    return ((deg + 180) % 360 + 360) % 360 - 180;
}

/**
 * Tiles whose lat-long grid centers fall inside the viewport window:
 * fovDeg tall (clamped at the poles) and fovDeg/cos(pitch) wide (capped at
 * a full turn). Roll does not move tile membership at this granularity.
 */
export function poseToFov(yawDeg: number, pitchDeg: number, grid: TileGrid): Set<number> {
    const tileW = 360 / grid.tilesH;
    const tileH = 180 / grid.tilesV;
    const halfV = grid.fovDeg / 2;
    const latLo = Math.max(-90, pitchDeg - halfV);
    const latHi = Math.min(90, pitchDeg + halfV);
    const cosP = Math.cos((pitchDeg * Math.PI) / 180);
    let halfH: number;
    if (cosP <= grid.fovDeg / 360) {
        halfH = 180;
    } else {
        halfH = Math.min(180, grid.fovDeg / cosP / 2);
    }
    const out = new Set<number>();
    for (let row = 0; row < grid.tilesV; row++) {
        const lat = 90 - (row + 0.5) * tileH;
        if (lat < latLo || lat > latHi) continue;
        for (let col = 0; col < grid.tilesH; col++) {
            const lon = -180 + (col + 0.5) * tileW;
            const dlon = Math.abs(wrapAngle(lon - yawDeg));
            if (dlon <= halfH) out.add(row * grid.tilesH + col);
        }
    }
    return out;
}

/** Binary label vector over the tile grid for one pose. */
export function poseToLabels(yawDeg: number, pitchDeg: number, grid: TileGrid): Float64Array {
    const labels = new Float64Array(grid.tilesH * grid.tilesV);
    for (const n of poseToFov(yawDeg, pitchDeg, grid)) labels[n] = 1;
    return labels;
}

export function jaccard(a: Set<number>, b: Set<number>): number {
    if (a.size === 0 && b.size === 0) return 1;
    let inter = 0;
    for (const n of a) if (b.has(n)) inter++;
    const union = a.size + b.size - inter;
    return union === 0 ? 1 : inter / union;
}

/** Tiles at or above the cutoff; the boundary is included. */
export function binarize(probs: Float64Array, cutoff: number): Set<number> {
    const out = new Set<number>();
    for (let n = 0; n < probs.length; n++) if (probs[n] >= cutoff) out.add(n);
    return out;
}
