// Hash-routed single-page client. Routes: #/ (homepage), #/session/<sid>,
// #/lineage/<id>. The API base URL is configurable via window.API_BASE.

import { ApiError, Client, SessionView } from "./api.js";
import { renderHomepage } from "./gallery.js";
import { renderLineage } from "./lineage.js";
import { renderSessionScreen } from "./session.js";

declare global {
  interface Window {
    API_BASE?: string;
  }
}

const client = new Client(window.API_BASE ?? "");
const app = document.getElementById("app") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;

function showError(err: unknown): void {
  banner.textContent =
    err instanceof ApiError ? `${err.reason}: ${err.message}` : String(err);
  banner.classList.remove("hidden");
  window.setTimeout(() => banner.classList.add("hidden"), 6000);
}

function goTo(hash: string): void {
  if (window.location.hash === hash) {
    void route();
  } else {
    window.location.hash = hash;
  }
}

async function startSession(origin: "fresh" | { branch: number }): Promise<void> {
  try {
    const view = await client.createSession(origin);
    goTo(`#/session/${view.sid}`);
  } catch (err) {
    showError(err);
  }
}

function showSession(view: SessionView): void {
  renderSessionScreen(
    app,
    view,
    client,
    (next) => showSession(next),
    (entryId) => goTo(`#/lineage/${entryId}`),
    showError,
  );
}

async function route(): Promise<void> {
  const hash = window.location.hash || "#/";
  const sessionMatch = hash.match(/^#\/session\/([0-9a-f]+)$/);
  const lineageMatch = hash.match(/^#\/lineage\/(\d+)$/);
  try {
    if (sessionMatch) {
      showSession(await client.getSession(sessionMatch[1]));
    } else if (lineageMatch) {
      await renderLineage(app, Number(lineageMatch[1]), client, (id) =>
        void startSession({ branch: id }),
      );
    } else {
      const sample = await client.getSample();
      renderHomepage(
        app,
        sample,
        client,
        (id) => void startSession({ branch: id }),
        () => void startSession("fresh"),
      );
    }
  } catch (err) {
    showError(err);
  }
}

window.addEventListener("hashchange", () => void route());
void route();
