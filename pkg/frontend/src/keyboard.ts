/**
 * Keyboard nudges: arrows move 1 px (shift: 10 px), [ and ] rotate 0.5 deg,
 * { and } rotate 5 deg, + and - scale by 1%. Fine control matters more than
 * speed here; the target is meter-level, not pixel-perfect, alignment.
 */

import type { UiStore } from './state.js';

export function bindKeyboard(store: UiStore, target: GlobalEventHandlers): void {
  target.onkeydown = (event: KeyboardEvent) => {
    if (event.target instanceof HTMLInputElement) return;
    const step = event.shiftKey ? 10 : 1;
    let handled = true;
    switch (event.key) {
      case 'ArrowLeft': store.nudge(-step, 0); break;
      case 'ArrowRight': store.nudge(step, 0); break;
      case 'ArrowUp': store.nudge(0, -step); break;
      case 'ArrowDown': store.nudge(0, step); break;
      case '[': store.nudge(0, 0, -0.5); break;
      case ']': store.nudge(0, 0, 0.5); break;
      case '{': store.nudge(0, 0, -5); break;
      case '}': store.nudge(0, 0, 5); break;
      case '+':
      case '=': store.nudge(0, 0, 0, 1.01); break;
      case '-': store.nudge(0, 0, 0, 1 / 1.01); break;
      default: handled = false;
    }
    if (handled) event.preventDefault();
  };
}
