/** Thin typed client for the alignment service HTTP API. */

import type { ExportPayload, MosaicMeta, ScenePayload, Sim2Alignment } from './types.js';

export class AlignClient {
  constructor(readonly baseUrl: string = '') {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async getScene(): Promise<ScenePayload> {
    return this.json<ScenePayload>('/scene');
  }

  async getAlignment(): Promise<Sim2Alignment> {
    return this.json<Sim2Alignment>('/alignment');
  }

  async postAlignment(alignment: Sim2Alignment): Promise<Sim2Alignment> {
    const resp = await fetch(this.url('/alignment'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(alignment),
    });
    if (!resp.ok) {
      throw new Error(`POST /alignment failed: ${resp.status}`);
    }
    return resp.json() as Promise<Sim2Alignment>;
  }

  async getProjection(space: string): Promise<number[][]> {
    const data = await this.json<{ points: number[][] }>(
      `/project?space=${encodeURIComponent(space)}`);
    return data.points;
  }

  async getExport(): Promise<ExportPayload> {
    return this.json<ExportPayload>('/export');
  }

  /** Satellite image bytes plus the georeference carried in X- headers. */
  async getSatellite(): Promise<{ blob: Blob; meta: MosaicMeta }> {
    const resp = await fetch(this.url('/satellite'));
    if (!resp.ok) {
      throw new Error(`GET /satellite failed: ${resp.status}`);
    }
    const blob = await resp.blob();
    const meta = await this.mosaicMetaFromHeaders(resp.headers, blob);
    return { blob, meta };
  }

  async mosaicMetaFromHeaders(headers: Headers, blob: Blob): Promise<MosaicMeta> {
    const ppm = Number(headers.get('X-Resolution-Ppm'));
    const extent = Number(headers.get('X-Extent-M'));
    const size = Math.round(ppm * extent);
    return {
      width: size,
      height: size,
      centerLat: Number(headers.get('X-Center-Lat')),
      centerLon: Number(headers.get('X-Center-Lon')),
      centerHeading: Number(headers.get('X-Center-Heading') ?? 0),
      resolutionPpm: ppm,
    };
  }

  groundImageUrl(name: string): string {
    return this.url(`/ground/${encodeURIComponent(name)}`);
  }

  private async json<T>(path: string): Promise<T> {
    const resp = await fetch(this.url(path));
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    return resp.json() as Promise<T>;
  }
}
