import {
  EditRequest,
  EditResponse,
  EditResponseSchema,
  Healthz,
  HealthzSchema,
  RecoverResponse,
  RecoverResponseSchema,
  SessionCreated,
  SessionCreatedSchema,
  SessionSummary,
  SessionSummarySchema,
  Vocabulary,
  VocabularySchema,
} from "./types.js";

/** Non-2xx service reply, carrying the status and the body's detail field. */
export class ApiError extends Error {
  override name = "ApiError";

  constructor(
    readonly status: number,
    readonly detail: unknown,
    message?: string,
  ) {
    super(message ?? `service replied ${status}: ${ApiError.describe(detail)}`);
  }

  static describe(detail: unknown): string {
    if (typeof detail === "string") return detail;
    return JSON.stringify(detail);
  }
}

async function errorFrom(resp: Response): Promise<ApiError> {
  let detail: unknown = await resp.text();
  try {
    const body = JSON.parse(detail as string);
    if (body && typeof body === "object" && "detail" in body) {
      detail = (body as { detail: unknown }).detail;
    }
  } catch {
    // not JSON; keep the raw text
  }
  return new ApiError(resp.status, detail);
}

/** Typed client for the try-on service. Every image an endpoint returns is
 *  passed through as the exact base64 string from the wire; nothing is
 *  re-encoded on this side. */
export class StudioApi {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async getJson(path: string): Promise<unknown> {
    const resp = await fetch(this.url(path));
    if (!resp.ok) throw await errorFrom(resp);
    return resp.json();
  }

  private async postJson(path: string, body?: unknown): Promise<unknown> {
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await errorFrom(resp);
    return resp.json();
  }

  async healthz(): Promise<Healthz> {
    return HealthzSchema.parse(await this.getJson("/healthz"));
  }

  async vocabulary(): Promise<Vocabulary> {
    return VocabularySchema.parse(await this.getJson("/vocabulary"));
  }

  async createSession(fileBytes: Uint8Array, fileName: string): Promise<SessionCreated> {
    const form = new FormData();
    const copy = new Uint8Array(fileBytes.byteLength);
    copy.set(fileBytes);
    form.append("file", new Blob([copy.buffer], { type: "image/png" }), fileName);
    const resp = await fetch(this.url("/sessions"), { method: "POST", body: form });
    if (!resp.ok) throw await errorFrom(resp);
    return SessionCreatedSchema.parse(await resp.json());
  }

  async summary(sessionId: string): Promise<SessionSummary> {
    return SessionSummarySchema.parse(
      await this.getJson(`/sessions/${encodeURIComponent(sessionId)}`),
    );
  }

  async createEdit(sessionId: string, request: EditRequest): Promise<EditResponse> {
    return EditResponseSchema.parse(
      await this.postJson(`/sessions/${encodeURIComponent(sessionId)}/edits`, request),
    );
  }

  async recoverEdit(sessionId: string, editIndex: number): Promise<RecoverResponse> {
    return RecoverResponseSchema.parse(
      await this.postJson(
        `/sessions/${encodeURIComponent(sessionId)}/edits/${editIndex}/recover`,
      ),
    );
  }
}
