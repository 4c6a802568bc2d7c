/** Bootstrap: wire the store, canvases, controls, and keyboard together. */

import { AlignClient } from './api.js';
import { bindKeyboard } from './keyboard.js';
import { GroundView, SatelliteView } from './overlay.js';
import { UiStore } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string): void {
  const banner = el<HTMLDivElement>('error-banner');
  banner.textContent = message;
  banner.style.display = 'block';
}

async function boot(): Promise<void> {
  const client = new AlignClient('');
  const store = new UiStore(client);
  const satView = new SatelliteView(el<HTMLCanvasElement>('sat-canvas'), store);
  const groundView = new GroundView(el<HTMLCanvasElement>('ground-canvas'), store);
  store.onChange(() => {
    satView.draw();
    groundView.draw();
    el<HTMLSpanElement>('alignment-readout').textContent =
      `tx ${store.alignment.tx.toFixed(1)} px, ty ${store.alignment.ty.toFixed(1)} px, ` +
      `theta ${store.alignment.theta_deg.toFixed(2)} deg, scale ${store.alignment.scale.toFixed(4)}`;
  });

  let session;
  try {
    session = await store.loadSession();
  } catch (err) {
    showError(`alignment server unreachable: ${err}`);
    return;
  }
  await satView.setImage(session.satelliteBlob);

  // ground image selector
  const selector = el<HTMLSelectElement>('ground-select');
  for (const image of session.scene.images) {
    const option = document.createElement('option');
    option.value = image.name;
    option.textContent = image.name;
    selector.appendChild(option);
  }
  selector.onchange = async () => {
    await store.selectGroundImage(selector.value);
    await groundView.setImageUrl(client.groundImageUrl(selector.value));
  };
  if (store.selectedGroundImage) {
    selector.value = store.selectedGroundImage;
    await store.refreshGroundProjection();
    await groundView.setImageUrl(client.groundImageUrl(store.selectedGroundImage));
  }

  // drag to translate on the satellite canvas
  const canvas = el<HTMLCanvasElement>('sat-canvas');
  let dragging: { x: number; y: number } | null = null;
  canvas.onpointerdown = (event) => {
    dragging = { x: event.offsetX, y: event.offsetY };
    canvas.setPointerCapture(event.pointerId);
  };
  canvas.onpointermove = (event) => {
    if (!dragging) return;
    store.nudge(event.offsetX - dragging.x, event.offsetY - dragging.y);
    dragging = { x: event.offsetX, y: event.offsetY };
  };
  canvas.onpointerup = () => {
    dragging = null;
    void store.flush();
  };

  // sliders: rotation, scale, overlay opacity, point size
  const rotate = el<HTMLInputElement>('rotate-slider');
  rotate.oninput = () => store.adjust({ theta_deg: Number(rotate.value) });
  const scale = el<HTMLInputElement>('scale-slider');
  scale.oninput = () => store.adjust({ scale: Math.pow(10, Number(scale.value)) });
  const opacity = el<HTMLInputElement>('opacity-slider');
  opacity.oninput = () => { store.overlayOpacity = Number(opacity.value); satView.draw(); groundView.draw(); };
  const size = el<HTMLInputElement>('size-slider');
  size.oninput = () => { store.pointSize = Number(size.value); satView.draw(); groundView.draw(); };

  bindKeyboard(store, window);

  el<HTMLButtonElement>('export-button').onclick = async () => {
    try {
      const json = await store.exportAlignment();
      const blob = new Blob([json], { type: 'application/json' });
      const link = document.createElement('a');
      link.href = URL.createObjectURL(blob);
      link.download = 'geoalignment.json';
      link.click();
    } catch (err) {
      showError(`export failed: ${err}`);
    }
  };
}

void boot();
