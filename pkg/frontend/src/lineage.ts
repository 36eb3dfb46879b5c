// Lineage view: the ancestor chain of a published image back to its
// fresh-origin root, newest first. API failures render a visible error
// rather than silently truncating the chain.

import type { Client } from "./api.js";

export async function renderLineage(
  root: HTMLElement,
  entryId: number,
  client: Client,
  onBranch: (entryId: number) => void,
): Promise<void> {
  root.replaceChildren();
  const title = document.createElement("h2");
  title.textContent = `Lineage of #${entryId}`;
  root.append(title);
  try {
    const { lineage } = await client.getLineage(entryId);
    const chain = document.createElement("div");
    chain.className = "lineage";
    lineage.forEach((step, depth) => {
      const card = document.createElement("figure");
      card.className = "lineage-step";
      const img = document.createElement("img");
      img.src = client.imageUrl(step.image);
      img.alt = step.title;
      card.append(img);
      const caption = document.createElement("figcaption");
      caption.textContent =
        depth === lineage.length - 1
          ? `#${step.id} ${step.title} (fresh root)`
          : `#${step.id} ${step.title}`;
      card.append(caption);
      const branch = document.createElement("button");
      branch.textContent = "Branch";
      branch.addEventListener("click", () => onBranch(step.id));
      card.append(branch);
      chain.append(card);
    });
    root.append(chain);
  } catch (err) {
    const failure = document.createElement("p");
    failure.className = "error";
    failure.textContent = `Could not load lineage: ${String(err)}`;
    root.append(failure);
  }
}
