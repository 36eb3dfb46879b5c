// Pure session-screen view logic: the selection set, control gating, and
// action payload validation. Everything that changes evolution state is an
// API round-trip; this module never mutates a session.

import type { SelectAction, SessionView } from "./api.js";

export const STRENGTH_MIN = 0.01;
export const STRENGTH_MAX = 1.0;
export const STRENGTH_DEFAULT = 0.5;

export const MUTATION_MODES = ["structure-only", "color-only", "both"] as const;

export class SelectionSet {
  private chosen: number[] = [];

  constructor(readonly populationSize: number) {}

  toggle(index: number): void {
    if (index < 0 || index >= this.populationSize) {
      throw new RangeError(`tile index ${index} out of range`);
    }
    const at = this.chosen.indexOf(index);
    if (at >= 0) {
      this.chosen.splice(at, 1);
    } else {
      this.chosen.push(index);
    }
  }

  has(index: number): boolean {
    return this.chosen.includes(index);
  }

  get size(): number {
    return this.chosen.length;
  }

  values(): number[] {
    return [...this.chosen]; // selection order, which becomes parent order
  }

  clear(): void {
    this.chosen = [];
  }
}

export function canSubmitSelection(selection: SelectionSet): boolean {
  return selection.size >= 1;
}

export function publishEnabled(view: SessionView): boolean {
  return view.can_publish && !view.published;
}

export function modeSwitchEnabled(view: SessionView): boolean {
  return view.color_mode;
}

export function clampStrength(value: number): number {
  if (Number.isNaN(value)) return STRENGTH_DEFAULT;
  return Math.min(STRENGTH_MAX, Math.max(STRENGTH_MIN, value));
}

export interface PendingControls {
  strength: number | null; // null: keep the session's current strength
  mode: string | null;     // null: keep the session's current mode
}

export function buildSelectAction(
  selection: SelectionSet,
  controls: PendingControls,
  view: SessionView,
): SelectAction {
  if (!canSubmitSelection(selection)) {
    throw new Error("select at least one parent tile");
  }
  const action: SelectAction = { type: "select", indices: selection.values() };
  if (controls.strength !== null && controls.strength !== view.strength) {
    action.strength = clampStrength(controls.strength);
  }
  if (controls.mode !== null && controls.mode !== view.mode) {
    if (!view.color_mode && controls.mode !== "structure-only") {
      throw new Error("color mutation modes need color mode on");
    }
    action.mode = controls.mode;
  }
  return action;
}

export function generationLabel(view: SessionView): string {
  return `generation ${view.generation} / ${view.generations_to_publish}`;
}
