/**
 * UI session state: the alignment mirror with optimistic local updates,
 * a debounced latest-wins POST to the server, and revert on rejection.
 * Pure logic, no DOM; the canvas layer subscribes via onChange.
 */

import { AlignClient } from './api.js';
import { applySim2 } from './sim2.js';
import { IDENTITY_ALIGNMENT } from './types.js';
import type { MosaicMeta, ScenePayload, Sim2Alignment } from './types.js';

export interface SessionData {
  scene: ScenePayload;
  mosaic: MosaicMeta;
  satelliteBlob: Blob;
}

type Listener = () => void;

export class UiStore {
  alignment: Sim2Alignment = { ...IDENTITY_ALIGNMENT };
  selectedGroundImage: string | null = null;
  overlayOpacity = 0.85;
  pointSize = 2;

  scene: ScenePayload = { points: [], images: [] };
  mosaic: MosaicMeta | null = null;
  groundProjection: number[][] = [];

  private serverAlignment: Sim2Alignment = { ...IDENTITY_ALIGNMENT };
  private listeners: Listener[] = [];
  private syncTimer: ReturnType<typeof setTimeout> | null = null;
  private inFlight: Promise<void> | null = null;
  private dirty = false;

  constructor(readonly client: AlignClient, readonly debounceMs = 150) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async loadSession(): Promise<SessionData> {
    const [scene, alignment, satellite] = await Promise.all([
      this.client.getScene(),
      this.client.getAlignment(),
      this.client.getSatellite(),
    ]);
    this.scene = scene;
    this.alignment = { ...alignment };
    this.serverAlignment = { ...alignment };
    this.mosaic = satellite.meta;
    if (scene.images.length && this.selectedGroundImage === null) {
      this.selectedGroundImage = scene.images[0].name;
    }
    this.emit();
    return { scene, mosaic: satellite.meta, satelliteBlob: satellite.blob };
  }

  /** Current satellite-pixel positions of the point cloud (optimistic). */
  projectedPoints(): number[][] {
    if (!this.mosaic) return [];
    return applySim2(this.alignment, this.scene.points, this.mosaic);
  }

  /**
   * Apply a partial alignment change: local re-projection immediately,
   * server sync debounced (latest state wins, one POST in flight).
   */
  adjust(delta: Partial<Sim2Alignment>): void {
    this.alignment = { ...this.alignment, ...delta };
    if (delta.theta_deg !== undefined) {
      this.alignment.theta_deg = ((this.alignment.theta_deg % 360) + 360) % 360;
    }
    this.emit();
    this.scheduleSync();
  }

  nudge(dtx: number, dty: number, dtheta = 0, scaleFactor = 1): void {
    this.adjust({
      tx: this.alignment.tx + dtx,
      ty: this.alignment.ty + dty,
      theta_deg: this.alignment.theta_deg + dtheta,
      scale: this.alignment.scale * scaleFactor,
    });
  }

  private scheduleSync(): void {
    this.dirty = true;
    if (this.syncTimer !== null) clearTimeout(this.syncTimer);
    this.syncTimer = setTimeout(() => void this.sync(), this.debounceMs);
  }

  private async sync(): Promise<void> {
    this.syncTimer = null;
    if (this.inFlight) return; // latest-wins: re-scheduled when it settles
    if (!this.dirty) return;
    this.dirty = false;
    const payload = { ...this.alignment };
    this.inFlight = (async () => {
      try {
        const accepted = await this.client.postAlignment(payload);
        this.serverAlignment = { ...accepted };
        await this.refreshGroundProjection();
      } catch {
        // rejected: drop the optimistic state, fall back to the server's
        this.alignment = { ...this.serverAlignment };
        this.dirty = false;
        this.emit();
      } finally {
        this.inFlight = null;
      }
    })();
    await this.inFlight;
    if (this.dirty) await this.sync(); // state moved while posting
  }

  /** Force-complete any pending sync (drag release, tests, export). */
  async flush(): Promise<void> {
    if (this.syncTimer !== null) {
      clearTimeout(this.syncTimer);
      this.syncTimer = null;
    }
    while (this.dirty || this.inFlight) {
      if (this.inFlight) await this.inFlight;
      if (this.dirty) await this.sync();
    }
  }

  async refreshGroundProjection(): Promise<void> {
    if (!this.selectedGroundImage) return;
    try {
      this.groundProjection = await this.client.getProjection(
        `ground:${this.selectedGroundImage}`);
      this.emit();
    } catch {
      this.groundProjection = [];
    }
  }

  async selectGroundImage(name: string): Promise<void> {
    this.selectedGroundImage = name;
    await this.refreshGroundProjection();
    this.emit();
  }

  async exportAlignment(): Promise<string> {
    await this.flush();
    const payload = await this.client.getExport();
    return JSON.stringify(payload, null, 2);
  }
}
