import { ApiError, StudioApi } from "./api.js";
import { splitText } from "./prompt.js";
import { StudioStore } from "./state.js";
import { EditRequest } from "./types.js";

/** Mirror of the server's per-edit condition metadata, built client-side so
 *  a fresh edit card can show its condition without waiting for a summary
 *  poll. A later mergeSummary replaces it with the server's copy verbatim. */
export function conditionMeta(request: EditRequest): Record<string, unknown> {
  let upper = request.text_upper ?? null;
  let lower = request.text_lower ?? null;
  if (request.text !== undefined) {
    [upper, lower] = splitText(request.text);
  }
  return {
    text_upper: upper,
    text_lower: lower,
    has_patch_upper: request.patch_upper !== undefined,
    has_patch_lower: request.patch_lower !== undefined,
    base: request.base ?? null,
  };
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return ApiError.describe(err.detail);
  if (err instanceof Error) return err.message;
  return String(err);
}

/** Sequences service calls against the store. All pixel data flows straight
 *  from the service into the store; this layer only moves it. */
export class StudioController {
  constructor(
    readonly api: StudioApi,
    readonly store: StudioStore,
    private readonly pollMs = 750,
  ) {}

  async init(): Promise<void> {
    this.store.setVocabulary(await this.api.vocabulary());
  }

  async uploadPortrait(fileBytes: Uint8Array, fileName: string): Promise<string> {
    this.store.beginUpload(fileBytes, fileName);
    try {
      const created = await this.api.createSession(fileBytes, fileName);
      this.store.completeUpload(created.session_id, created.preview);
      return created.session_id;
    } catch (err) {
      this.store.failUpload(describe(err));
      throw err;
    }
  }

  /** Restore a persisted session id after a reload. */
  async rehydrate(sessionId: string): Promise<void> {
    this.store.rehydrate(await this.api.summary(sessionId));
  }

  async refreshHistory(): Promise<void> {
    const sessionId = this.requireSession();
    this.store.mergeSummary(await this.api.summary(sessionId));
  }

  /** Compose the current selections into a request and run the edit. */
  async submitEdit(): Promise<number> {
    const sessionId = this.requireSession();
    const request = this.store.composeCondition();
    this.store.beginEdit();
    try {
      const response = await this.api.createEdit(sessionId, request);
      this.store.completeEdit(response.edit_index, response.image, conditionMeta(request));
      return response.edit_index;
    } catch (err) {
      this.store.failEdit(describe(err));
      throw err;
    }
  }

  /** Run identity recovery for one history entry, polling the summary while
   *  the request is in flight so other tabs' progress is reflected too. */
  async recover(editIndex: number): Promise<void> {
    const sessionId = this.requireSession();
    this.store.beginRecover(editIndex);
    const poll = setInterval(() => {
      this.api
        .summary(sessionId)
        .then((summary) => this.store.mergeSummary(summary))
        .catch(() => undefined);
    }, this.pollMs);
    try {
      const response = await this.api.recoverEdit(sessionId, editIndex);
      this.store.completeRecover(editIndex, response.image);
    } catch (err) {
      const message =
        err instanceof ApiError && err.status === 409
          ? "recovery in progress"
          : describe(err);
      this.store.failRecover(editIndex, message);
      throw err;
    } finally {
      clearInterval(poll);
    }
  }

  private requireSession(): string {
    const sessionId = this.store.sessionId;
    if (!sessionId) throw new Error("no active session");
    return sessionId;
  }
}
