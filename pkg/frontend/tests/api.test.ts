import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, Client } from "../src/api.js";

interface Captured {
  url: string;
  init?: RequestInit;
}

function mockFetch(status: number, payload: unknown): Captured {
  const captured: Captured = { url: "" };
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      captured.url = url;
      captured.init = init;
      return {
        ok: status < 400,
        status,
        statusText: status < 400 ? "OK" : "Error",
        json: async () => payload,
      } as Response;
    }),
  );
  return captured;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("Client", () => {
  it("fetches the archive sample from the configured base", async () => {
    const captured = mockFetch(200, { size: 0, categories: {} });
    const client = new Client("http://host:9");
    await client.getSample();
    expect(captured.url).toBe("http://host:9/archive/sample");
  });

  it("creates fresh and branch sessions with the right payloads", async () => {
    const view = { sid: "abc", generation: 0, images: [] };
    let captured = mockFetch(200, view);
    const client = new Client();
    await client.createSession("fresh");
    expect(captured.url).toBe("/sessions");
    expect(JSON.parse(String(captured.init?.body))).toEqual({ origin: "fresh" });

    captured = mockFetch(200, view);
    await client.createSession({ branch: 7 });
    expect(JSON.parse(String(captured.init?.body))).toEqual({
      origin: { branch: 7 },
    });
  });

  it("posts select actions verbatim", async () => {
    const captured = mockFetch(200, {});
    const client = new Client();
    await client.postAction("abc", {
      type: "select",
      indices: [3, 7],
      strength: 0.25,
    });
    expect(captured.url).toBe("/sessions/abc/action");
    expect(JSON.parse(String(captured.init?.body))).toEqual({
      type: "select",
      indices: [3, 7],
      strength: 0.25,
    });
    expect(captured.init?.method).toBe("POST");
  });

  it("publishes with index and title", async () => {
    const captured = mockFetch(200, { entry_id: 12, image: "x" });
    const client = new Client();
    const result = await client.publish("abc", 4, "Gate");
    expect(result.entry_id).toBe(12);
    expect(JSON.parse(String(captured.init?.body))).toEqual({
      index: 4,
      title: "Gate",
    });
  });

  it("surfaces structured API errors with status and reason", async () => {
    mockFetch(409, {
      detail: { reason: "session_state", message: "already published" },
    });
    const client = new Client();
    const err = await client
      .postAction("abc", { type: "toggle_color" })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.reason).toBe("session_state");
    expect(err.message).toBe("already published");
  });

  it("prefixes image URLs with the base", () => {
    const client = new Client("http://srv");
    expect(client.imageUrl("/archive/entries/3/image.png")).toBe(
      "http://srv/archive/entries/3/image.png",
    );
  });
});
