// Archive homepage: the five category panels, each tile branchable, plus
// the fresh-start button. An empty archive shows only the fresh start.

import type { ArchiveSample, Client } from "./api.js";

const CATEGORY_TITLES: Record<string, string> = {
  top_rated: "Top rated",
  best_new: "Best new",
  most_branched: "Most branched",
  latest: "Latest",
  random: "Random",
};

export function renderHomepage(
  root: HTMLElement,
  sample: ArchiveSample,
  client: Client,
  onBranch: (entryId: number) => void,
  onFresh: () => void,
): void {
  root.replaceChildren();

  const header = document.createElement("div");
  header.className = "toolbar";
  const freshButton = document.createElement("button");
  freshButton.textContent = "Start fresh";
  freshButton.addEventListener("click", onFresh);
  header.append(freshButton);
  const count = document.createElement("span");
  count.className = "muted";
  count.textContent = `${sample.size} published images`;
  header.append(count);
  root.append(header);

  if (sample.size === 0) {
    const empty = document.createElement("p");
    empty.textContent =
      "The archive is empty. Start a fresh session to publish the first image.";
    root.append(empty);
    return;
  }

  for (const [key, ids] of Object.entries(sample.categories)) {
    if (!ids.length) continue;
    const panel = document.createElement("section");
    panel.className = "panel";
    const title = document.createElement("h2");
    title.textContent = CATEGORY_TITLES[key] ?? key;
    panel.append(title);
    const grid = document.createElement("div");
    grid.className = "tile-grid";
    for (const id of ids) {
      const tile = document.createElement("button");
      tile.className = "tile";
      tile.title = `Branch image ${id}`;
      const img = document.createElement("img");
      img.src = client.imageUrl(`/archive/entries/${id}/image.png`);
      img.alt = `archive image ${id}`;
      tile.append(img);
      const caption = document.createElement("span");
      caption.textContent = `#${id}`;
      tile.append(caption);
      tile.addEventListener("click", () => onBranch(id));
      grid.append(tile);
    }
    panel.append(grid);
    root.append(panel);
  }
}
