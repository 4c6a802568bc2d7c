/** Canvas drawing: satellite basemap + projected point overlays. */

import type { UiStore } from './state.js';

export class SatelliteView {
  private image: HTMLImageElement | null = null;

  constructor(readonly canvas: HTMLCanvasElement, readonly store: UiStore) {}

  async setImage(blob: Blob): Promise<void> {
    const url = URL.createObjectURL(blob);
    this.image = new Image();
    await new Promise<void>((resolve, reject) => {
      this.image!.onload = () => resolve();
      this.image!.onerror = () => reject(new Error('satellite image failed to decode'));
      this.image!.src = url;
    });
    this.canvas.width = this.image.width;
    this.canvas.height = this.image.height;
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) ctx.drawImage(this.image, 0, 0);
    const size = this.store.pointSize;
    ctx.globalAlpha = this.store.overlayOpacity;
    ctx.fillStyle = '#ff3b6b';
    for (const [x, y] of this.store.projectedPoints()) {
      if (x < -size || y < -size || x > this.canvas.width + size
          || y > this.canvas.height + size) continue;
      ctx.fillRect(x - size / 2, y - size / 2, size, size);
    }
    ctx.globalAlpha = 1.0;
    // anchor cross at the mosaic center
    const cx = this.canvas.width / 2;
    const cy = this.canvas.height / 2;
    ctx.strokeStyle = '#ffd24d';
    ctx.beginPath();
    ctx.moveTo(cx - 6, cy);
    ctx.lineTo(cx + 6, cy);
    ctx.moveTo(cx, cy - 6);
    ctx.lineTo(cx, cy + 6);
    ctx.stroke();
  }
}

export class GroundView {
  private image: HTMLImageElement | null = null;

  constructor(readonly canvas: HTMLCanvasElement, readonly store: UiStore) {}

  async setImageUrl(url: string): Promise<void> {
    const img = new Image();
    const loaded = await new Promise<boolean>((resolve) => {
      img.onload = () => resolve(true);
      img.onerror = () => resolve(false); // photos are optional
      img.src = url;
    });
    this.image = loaded ? img : null;
    if (loaded) {
      this.canvas.width = img.width;
      this.canvas.height = img.height;
    }
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) {
      ctx.drawImage(this.image, 0, 0);
    } else {
      ctx.fillStyle = '#222';
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
      ctx.fillStyle = '#888';
      ctx.fillText('no ground photo available', 10, 20);
    }
    ctx.globalAlpha = this.store.overlayOpacity;
    ctx.fillStyle = '#3bd1ff';
    const size = this.store.pointSize;
    for (const [x, y] of this.store.groundProjection) {
      if (x < 0 || y < 0 || x > this.canvas.width || y > this.canvas.height) continue;
      ctx.fillRect(x - size / 2, y - size / 2, size, size);
    }
    ctx.globalAlpha = 1.0;
  }
}
