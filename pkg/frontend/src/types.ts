/** Planar alignment mapping reconstruction coordinates to satellite pixels. */
export interface Sim2Alignment {
  tx: number;
  ty: number;
  theta_deg: number;
  scale: number;
}

export const IDENTITY_ALIGNMENT: Sim2Alignment = { tx: 0, ty: 0, theta_deg: 0, scale: 1 };

export interface SceneImage {
  name: string;
  /** 4x4 camera-to-world matrix, row major. */
  pose: number[][];
}

export interface ScenePayload {
  points: number[][];
  images: SceneImage[];
}

/** Georeference of the satellite mosaic, read off the /satellite headers. */
export interface MosaicMeta {
  width: number;
  height: number;
  centerLat: number;
  centerLon: number;
  centerHeading: number;
  resolutionPpm: number;
}

export interface ExportPayload {
  lat: number;
  lon: number;
  heading: number;
  scale: number;
  reference: string;
}
