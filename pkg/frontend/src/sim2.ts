/**
 * Client-side replica of the server's planar alignment math, so dragging
 * re-projects the point cloud locally at interactive rates. Must stay in
 * lockstep with the service; the e2e test pins agreement to 0.5 px.
 */

import type { ExportPayload, MosaicMeta, Sim2Alignment } from './types.js';

const EARTH_RADIUS_M = 6378137.0;
const DEG = Math.PI / 180.0;

/** Project reconstruction points (x, y, z; z dropped) to mosaic pixels. */
export function applySim2(a: Sim2Alignment, points: number[][], mosaic: MosaicMeta): number[][] {
  const t = a.theta_deg * DEG;
  const cos = Math.cos(t);
  const sin = Math.sin(t);
  const r = mosaic.resolutionPpm;
  const cx = mosaic.width / 2;
  const cy = mosaic.height / 2;
  return points.map(([x, y]) => {
    const sx = x * a.scale;
    const sy = y * a.scale;
    return [
      (cos * sx - sin * sy) * r + a.tx + cx,
      (sin * sx + cos * sy) * r + a.ty + cy,
    ];
  });
}

function mercator(latDeg: number, lonDeg: number): [number, number] {
  return [
    EARTH_RADIUS_M * lonDeg * DEG,
    EARTH_RADIUS_M * Math.asinh(Math.tan(latDeg * DEG)),
  ];
}

/**
 * Rebuild the pixel-space alignment from an exported georeference, the
 * inverse of the server's export: pose -> Mercator offset from the mosaic
 * center -> ground meters -> anchor pixel; theta from the heading.
 */
export function alignmentFromExport(
  exported: ExportPayload,
  mosaic: MosaicMeta,
  refCameraCenter: number[],
): Sim2Alignment {
  const [mx, my] = mercator(mosaic.centerLat, mosaic.centerLon);
  const [px, py] = mercator(exported.lat, exported.lon);
  const shrink = Math.cos(mosaic.centerLat * DEG);
  const east = (px - mx) * shrink;
  const north = (py - my) * shrink;
  const anchor = [
    mosaic.width / 2 + east * mosaic.resolutionPpm,
    mosaic.height / 2 - north * mosaic.resolutionPpm,
  ];
  const theta = ((exported.heading - mosaic.centerHeading) % 360 + 360) % 360;
  const partial: Sim2Alignment = { tx: 0, ty: 0, theta_deg: theta, scale: exported.scale };
  const projected = applySim2(partial, [refCameraCenter], mosaic)[0];
  return {
    tx: anchor[0] - projected[0],
    ty: anchor[1] - projected[1],
    theta_deg: theta,
    scale: exported.scale,
  };
}

/** Project points into a ground photo through its pinhole camera. */
export function projectToGround(
  points: number[][],
  pose: number[][],
  fx: number, fy: number, cx: number, cy: number,
  nearPlane = 0.01,
): number[][] {
  // camera center and world-to-camera rotation from the 4x4 c2w matrix
  const r = pose;
  const out: number[][] = [];
  for (const [x, y, z] of points) {
    const dx = x - r[0][3];
    const dy = y - r[1][3];
    const dz = z - r[2][3];
    // R^T (p - t): rows of R^T are columns of R
    const camX = r[0][0] * dx + r[1][0] * dy + r[2][0] * dz;
    const camY = r[0][1] * dx + r[1][1] * dy + r[2][1] * dz;
    const camZ = r[0][2] * dx + r[1][2] * dy + r[2][2] * dz;
    if (camZ > nearPlane) {
      out.push([fx * camX / camZ + cx, fy * camY / camZ + cy]);
    }
  }
  return out;
}
