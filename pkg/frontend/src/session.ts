// Session screen: 15 selectable tiles, strength slider, color toggle,
// mutation-mode switch (disabled while grayscale), and the publish dialog
// that unlocks at the final generation.

import type { Client, SessionView } from "./api.js";
import {
  MUTATION_MODES,
  PendingControls,
  SelectionSet,
  buildSelectAction,
  canSubmitSelection,
  clampStrength,
  generationLabel,
  modeSwitchEnabled,
  publishEnabled,
} from "./state.js";

export function renderSessionScreen(
  root: HTMLElement,
  view: SessionView,
  client: Client,
  onViewChange: (view: SessionView) => void,
  onPublished: (entryId: number) => void,
  onError: (err: unknown) => void,
): void {
  root.replaceChildren();
  const selection = new SelectionSet(view.images.length);
  const controls: PendingControls = { strength: null, mode: null };

  const status = document.createElement("div");
  status.className = "toolbar";
  const label = document.createElement("strong");
  label.textContent = generationLabel(view);
  status.append(label);
  const settings = document.createElement("span");
  settings.className = "muted";
  settings.textContent =
    `color ${view.color_mode ? "on" : "off"} | strength ${view.strength} | ` +
    `mode ${view.mode}`;
  status.append(settings);
  root.append(status);

  const grid = document.createElement("div");
  grid.className = "tile-grid session-grid";
  const tiles: HTMLButtonElement[] = [];
  view.images.forEach((path, index) => {
    const tile = document.createElement("button");
    tile.className = "tile";
    const img = document.createElement("img");
    img.src = client.imageUrl(path) + `?g=${view.generation}`;
    img.alt = `candidate ${index}`;
    tile.append(img);
    const caption = document.createElement("span");
    caption.textContent = String(index);
    tile.append(caption);
    tile.addEventListener("click", () => {
      selection.toggle(index);
      tile.classList.toggle("selected", selection.has(index));
      submit.disabled = !canSubmitSelection(selection);
      publishButton.disabled = !(publishEnabled(view) && selection.size === 1);
    });
    tiles.push(tile);
    grid.append(tile);
  });
  root.append(grid);

  const bar = document.createElement("div");
  bar.className = "controls";

  const sliderLabel = document.createElement("label");
  sliderLabel.textContent = "strength";
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0.01";
  slider.max = "1";
  slider.step = "0.01";
  slider.value = String(view.strength);
  const sliderValue = document.createElement("span");
  sliderValue.textContent = slider.value;
  slider.addEventListener("input", () => {
    controls.strength = clampStrength(Number(slider.value));
    sliderValue.textContent = String(controls.strength);
  });
  sliderLabel.append(slider, sliderValue);
  bar.append(sliderLabel);

  const modeSelect = document.createElement("select");
  for (const mode of MUTATION_MODES) {
    const option = document.createElement("option");
    option.value = mode;
    option.textContent = mode;
    option.selected = mode === view.mode;
    modeSelect.append(option);
  }
  modeSelect.disabled = !modeSwitchEnabled(view);
  modeSelect.addEventListener("change", () => {
    controls.mode = modeSelect.value;
  });
  bar.append(modeSelect);

  const toggle = document.createElement("button");
  toggle.textContent = view.color_mode ? "Turn color off" : "Turn color on";
  toggle.addEventListener("click", async () => {
    try {
      onViewChange(await client.postAction(view.sid, { type: "toggle_color" }));
    } catch (err) {
      onError(err);
    }
  });
  bar.append(toggle);

  const submit = document.createElement("button");
  submit.textContent = "Breed next generation";
  submit.disabled = true;
  submit.addEventListener("click", async () => {
    try {
      const action = buildSelectAction(selection, controls, view);
      onViewChange(await client.postAction(view.sid, action));
    } catch (err) {
      onError(err);
    }
  });
  bar.append(submit);

  const publishButton = document.createElement("button");
  publishButton.textContent = "Publish selected…";
  publishButton.disabled = true;
  publishButton.addEventListener("click", async () => {
    const index = selection.values()[0];
    const title = window.prompt("Title for the published image:");
    if (!title) return;
    try {
      const result = await client.publish(view.sid, index, title);
      onPublished(result.entry_id);
    } catch (err) {
      onError(err);
    }
  });
  bar.append(publishButton);

  if (publishEnabled(view)) {
    const hint = document.createElement("span");
    hint.className = "muted";
    hint.textContent = "Final generation: pick one tile and publish it.";
    bar.append(hint);
  }

  root.append(bar);
}
