/** Typed client for the annotation service.
 *
 * The only way this application touches segmentation data; there is no
 * client-side mask math. The fetch implementation is injectable so tests
 * can pin the exact requests each call issues.
 */

import type {
  Axis,
  CreateResponse,
  EditEvent,
  EditResponse,
  Overrides,
  SessionState,
  SliceResponse,
  Target,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service returned ${status}: ${detail}`);
  }
}

async function errorDetail(response: Response): Promise<string> {
  const text = await response.text();
  try {
    const body = JSON.parse(text);
    if (body && typeof body.detail === "string") return body.detail;
    if (body && body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    // non-JSON error body: fall through to the raw text
  }
  return text || response.statusText;
}

export class Client {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, { method, ...init });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }

  private json<T>(method: string, path: string, body: unknown): Promise<T> {
    return this.request<T>(method, path, {
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(volume: ArrayBuffer | Blob, sessionId?: string): Promise<CreateResponse> {
    const query = sessionId ? `?session_id=${encodeURIComponent(sessionId)}` : "";
    return this.request<CreateResponse>("POST", `/sessions${query}`, {
      headers: { "content-type": "application/octet-stream" },
      body: volume,
    });
  }

  state(sessionId: string): Promise<SessionState> {
    return this.request<SessionState>("GET", `/sessions/${encodeURIComponent(sessionId)}/state`);
  }

  runLungs(sessionId: string, overrides?: Overrides, force = false): Promise<SessionState> {
    return this.json<SessionState>("POST", `/sessions/${encodeURIComponent(sessionId)}/lungs`, {
      overrides: overrides ?? {},
      force,
    });
  }

  runLesions(sessionId: string, overrides?: Overrides, force = false): Promise<SessionState> {
    return this.json<SessionState>("POST", `/sessions/${encodeURIComponent(sessionId)}/lesions`, {
      overrides: overrides ?? {},
      force,
    });
  }

  postEdit(sessionId: string, event: EditEvent): Promise<EditResponse> {
    return this.json<EditResponse>("POST", `/sessions/${encodeURIComponent(sessionId)}/edits`, event);
  }

  undo(sessionId: string): Promise<SessionState> {
    return this.request<SessionState>("POST", `/sessions/${encodeURIComponent(sessionId)}/undo`);
  }

  slice(
    sessionId: string,
    axis: Axis,
    index: number,
    options: { overlay?: string[]; window?: number; level?: number; signal?: AbortSignal } = {},
  ): Promise<SliceResponse> {
    const params = new URLSearchParams({ axis: String(axis), index: String(index) });
    if (options.overlay !== undefined) params.set("overlay", options.overlay.join(","));
    if (options.window !== undefined) params.set("window", String(options.window));
    if (options.level !== undefined) params.set("level", String(options.level));
    return this.request<SliceResponse>(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}/slice?${params.toString()}`,
      { signal: options.signal },
    );
  }

  exportUrl(sessionId: string, target?: Target, grid: "native" | "working" = "native"): string {
    const params = new URLSearchParams({ grid });
    if (target) params.set("target", target);
    return `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/export?${params.toString()}`;
  }

  meshUrl(sessionId: string, target: Target): string {
    return `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/mesh/${target}`;
  }
}
