// Thin typed client for the archive/session HTTP API. The server is the
// single source of truth; this module only shapes requests and surfaces
// errors, never evolves anything locally.

export interface SampleCategories {
  top_rated: number[];
  best_new: number[];
  most_branched: number[];
  latest: number[];
  random: number[];
}

export interface ArchiveSample {
  size: number;
  categories: SampleCategories;
}

export interface ArchiveEntry {
  id: number;
  title: string;
  agent_id: string;
  color_mode: boolean;
  parent_id: number | null;
  branch_count: number;
  rating_mean: number | null;
  rating_count: number;
  image: string;
}

export interface SessionView {
  sid: string;
  generation: number;
  generations_to_publish: number;
  color_mode: boolean;
  strength: number;
  mode: string;
  published: boolean;
  can_publish: boolean;
  images: string[];
}

export interface LineageStep {
  id: number;
  title: string;
  image: string;
}

export type SessionOrigin = "fresh" | { branch: number };

export interface SelectAction {
  type: "select";
  indices: number[];
  strength?: number;
  mode?: string;
}

export interface ToggleAction {
  type: "toggle_color";
}

export type SessionAction = SelectAction | ToggleAction;

export class ApiError extends Error {
  readonly status: number;
  readonly reason: string;

  constructor(status: number, reason: string, message: string) {
    super(message);
    this.status = status;
    this.reason = reason;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let reason = "http_error";
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    const detail = body?.detail;
    if (typeof detail === "object" && detail !== null) {
      reason = detail.reason ?? reason;
      message = detail.message ?? JSON.stringify(detail);
    } else if (typeof detail === "string") {
      message = detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, reason, message);
}

export class Client {
  constructor(readonly base: string = "") {}

  imageUrl(path: string): string {
    return this.base + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getSample(): Promise<ArchiveSample> {
    return this.request("/archive/sample");
  }

  getEntry(id: number): Promise<ArchiveEntry> {
    return this.request(`/archive/entries/${id}`);
  }

  getLineage(id: number): Promise<{ lineage: LineageStep[] }> {
    return this.request(`/archive/entries/${id}/lineage`);
  }

  createSession(origin: SessionOrigin): Promise<SessionView> {
    return this.post("/sessions", { origin });
  }

  getSession(sid: string): Promise<SessionView> {
    return this.request(`/sessions/${sid}`);
  }

  postAction(sid: string, action: SessionAction): Promise<SessionView> {
    return this.post(`/sessions/${sid}/action`, action);
  }

  publish(
    sid: string,
    index: number,
    title: string,
  ): Promise<{ entry_id: number; image: string }> {
    return this.post(`/sessions/${sid}/publish`, { index, title });
  }

  postRatings(scores: Record<number, number>): Promise<{ applied: number }> {
    return this.post("/ratings", { scores });
  }

  metricsSummary(): Promise<Record<string, number>> {
    return this.request("/metrics/summary");
  }
}
