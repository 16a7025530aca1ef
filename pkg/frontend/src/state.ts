import { PromptFormatError, buildPrompt, splitText } from "./prompt.js";
import {
  EditRequest,
  HistoryEntry,
  ImageRef,
  MIN_PATCH_SIDE,
  SessionSummary,
  Swatch,
  SwatchOrigin,
  SwatchSide,
  Vocabulary,
} from "./types.js";

/** What a given surface should display. Service images stay verbatim base64;
 *  the original portrait is the user's own file bytes. */
export type ImageSource =
  | { kind: "png-base64"; base64: string }
  | { kind: "file-bytes"; bytes: Uint8Array };

/** Session-scoped studio state. All mutations go through methods so the
 *  invariants hold: history mirrors the server's order, at most one edit
 *  request is in flight, recovery is only offered for existing entries, and
 *  no pixel data is ever produced on this side.
 */
export class StudioStore {
  vocabulary: Vocabulary | null = null;

  sessionId: string | null = null;
  originalBytes: Uint8Array | null = null;
  originalName: string | null = null;
  previewBase64: string | null = null;

  upperSelection: string | null = null;
  lowerSelection: string | null = null;
  freeText = "";

  tray: Swatch[] = [];
  history: HistoryEntry[] = [];
  comparison: [ImageRef, ImageRef] | null = null;

  editInFlight = false;
  uploadProblem: string | null = null;
  editProblem: string | null = null;
  recoverProblem: string | null = null;

  private nextSwatchId = 1;
  private listeners = new Set<() => void>();

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  setVocabulary(vocabulary: Vocabulary): void {
    this.vocabulary = vocabulary;
    this.emit();
  }

  // ---- session lifecycle -------------------------------------------------

  /** Starting a new upload discards all session-scoped state. */
  beginUpload(fileBytes: Uint8Array, fileName: string): void {
    this.sessionId = null;
    this.originalBytes = fileBytes;
    this.originalName = fileName;
    this.previewBase64 = null;
    this.tray = [];
    this.history = [];
    this.comparison = null;
    this.editInFlight = false;
    this.uploadProblem = null;
    this.editProblem = null;
    this.recoverProblem = null;
    this.emit();
  }

  completeUpload(sessionId: string, previewBase64: string): void {
    this.sessionId = sessionId;
    this.previewBase64 = previewBase64;
    this.uploadProblem = null;
    this.emit();
  }

  failUpload(message: string): void {
    this.sessionId = null;
    this.previewBase64 = null;
    this.uploadProblem = message;
    this.emit();
  }

  /** Rebuild from a server summary (page reload with a persisted session id).
   *  Pixels are not part of the summary, so entries start metadata-only. */
  rehydrate(summary: SessionSummary): void {
    this.sessionId = summary.session_id;
    this.originalBytes = null;
    this.originalName = null;
    this.previewBase64 = null;
    this.tray = [];
    this.comparison = null;
    this.editInFlight = false;
    this.history = summary.history.map((row) => ({
      editIndex: row.edit_index,
      condition: row.condition,
      imageBase64: null,
      recoveredBase64: null,
      recovered: row.recovered,
      recovering: false,
    }));
    this.emit();
  }

  /** Adopt the server's view of history (used after polling). Local pixel
   *  caches are kept for entries the server still lists; order and flags are
   *  the server's. */
  mergeSummary(summary: SessionSummary): void {
    if (summary.session_id !== this.sessionId) {
      throw new Error("summary belongs to a different session");
    }
    this.history = summary.history.map((row) => {
      const known = this.history[row.edit_index];
      const sameEntry = known !== undefined && known.editIndex === row.edit_index;
      return {
        editIndex: row.edit_index,
        condition: row.condition,
        imageBase64: sameEntry ? known.imageBase64 : null,
        recoveredBase64: sameEntry ? known.recoveredBase64 : null,
        recovered: row.recovered || (sameEntry && known.recoveredBase64 !== null),
        recovering: sameEntry ? known.recovering : false,
      };
    });
    this.emit();
  }

  // ---- prompt and condition building ------------------------------------

  selectUpper(tag: string | null): void {
    this.upperSelection = tag;
    this.emit();
  }

  selectLower(tag: string | null): void {
    this.lowerSelection = tag;
    this.emit();
  }

  setFreeText(text: string): void {
    this.freeText = text;
    this.emit();
  }

  addSwatch(base64: string, origin: SwatchOrigin, sidePx: number): Swatch {
    if (sidePx < MIN_PATCH_SIDE) {
      throw new Error(
        `swatch side ${sidePx} px is below the ${MIN_PATCH_SIDE} px minimum`,
      );
    }
    const swatch: Swatch = {
      id: this.nextSwatchId,
      base64,
      origin,
      sidePx,
      assigned: null,
    };
    this.nextSwatchId += 1;
    this.tray.push(swatch);
    this.emit();
    return swatch;
  }

  /** Assign a tray swatch to a garment side; any previous holder of that
   *  side is unassigned. Passing null unassigns the swatch. */
  assignSwatch(id: number, side: SwatchSide | null): void {
    const swatch = this.tray.find((s) => s.id === id);
    if (!swatch) throw new Error(`no swatch ${id} in the tray`);
    if (side !== null) {
      for (const other of this.tray) {
        if (other.assigned === side) other.assigned = null;
      }
    }
    swatch.assigned = side;
    this.emit();
  }

  removeSwatch(id: number): void {
    this.tray = this.tray.filter((s) => s.id !== id);
    this.emit();
  }

  assignedSwatch(side: SwatchSide): Swatch | null {
    return this.tray.find((s) => s.assigned === side) ?? null;
  }

  /** The display prompt for the current text selection, exactly as the
   *  server's builder would produce it, or null when no text is chosen. */
  assembledPrompt(): string | null {
    const text = this.freeText.trim();
    if (text) {
      const [upper, lower] = splitText(text);
      return buildPrompt(upper, lower);
    }
    if (this.upperSelection && this.lowerSelection) {
      return buildPrompt(this.upperSelection, this.lowerSelection);
    }
    return null;
  }

  /** Why the edit button is disabled, or null when a request can be built. */
  conditionProblem(): string | null {
    const text = this.freeText.trim();
    if (text) {
      try {
        splitText(text);
      } catch (err) {
        if (err instanceof PromptFormatError) return err.message;
        throw err;
      }
    }
    const anyText = Boolean(text || this.upperSelection || this.lowerSelection);
    const anyPatch = this.tray.some((s) => s.assigned !== null);
    if (!anyText && !anyPatch) {
      return "choose at least one condition (text or swatch)";
    }
    return null;
  }

  /** Build the edit request body from the current selections. */
  composeCondition(): EditRequest {
    const problem = this.conditionProblem();
    if (problem) throw new Error(problem);
    const request: EditRequest = {};
    const text = this.freeText.trim();
    if (text) {
      const [upper, lower] = splitText(text);
      request.text = buildPrompt(upper, lower);
    } else if (this.upperSelection && this.lowerSelection) {
      request.text = buildPrompt(this.upperSelection, this.lowerSelection);
    } else if (this.upperSelection) {
      request.text_upper = this.upperSelection;
    } else if (this.lowerSelection) {
      request.text_lower = this.lowerSelection;
    }
    const upperPatch = this.assignedSwatch("upper");
    const lowerPatch = this.assignedSwatch("lower");
    if (upperPatch) request.patch_upper = upperPatch.base64;
    if (lowerPatch) request.patch_lower = lowerPatch.base64;
    return request;
  }

  // ---- edits and recovery ------------------------------------------------

  canEdit(): boolean {
    return (
      this.sessionId !== null && !this.editInFlight && this.conditionProblem() === null
    );
  }

  beginEdit(): void {
    if (!this.canEdit()) throw new Error("edit is not available right now");
    this.editInFlight = true;
    this.editProblem = null;
    this.emit();
  }

  completeEdit(editIndex: number, imageBase64: string, condition: Record<string, unknown>): void {
    if (editIndex !== this.history.length) {
      throw new Error(
        `server assigned index ${editIndex} but local history has ${this.history.length} entries`,
      );
    }
    this.history.push({
      editIndex,
      condition,
      imageBase64,
      recoveredBase64: null,
      recovered: false,
      recovering: false,
    });
    this.editInFlight = false;
    this.emit();
  }

  failEdit(message: string): void {
    this.editInFlight = false;
    this.editProblem = message;
    this.emit();
  }

  canRecover(editIndex: number): boolean {
    const entry = this.history[editIndex];
    return entry !== undefined && !entry.recovering;
  }

  beginRecover(editIndex: number): void {
    if (!this.canRecover(editIndex)) {
      throw new Error(`recovery is not available for entry ${editIndex}`);
    }
    const entry = this.history[editIndex]!;
    entry.recovering = true;
    this.recoverProblem = null;
    this.emit();
  }

  completeRecover(editIndex: number, imageBase64: string): void {
    const entry = this.history[editIndex];
    if (!entry) throw new Error(`no history entry ${editIndex}`);
    entry.recovering = false;
    entry.recovered = true;
    entry.recoveredBase64 = imageBase64;
    this.emit();
  }

  failRecover(editIndex: number, message: string): void {
    const entry = this.history[editIndex];
    if (entry) entry.recovering = false;
    this.recoverProblem = message;
    this.emit();
  }

  // ---- display -----------------------------------------------------------

  /** Resolve a reference to displayable content. Everything except the
   *  user's own uploaded file is a verbatim service response. */
  imageSource(ref: ImageRef): ImageSource | null {
    switch (ref.kind) {
      case "original":
        return this.originalBytes
          ? { kind: "file-bytes", bytes: this.originalBytes }
          : null;
      case "preview":
        return this.previewBase64
          ? { kind: "png-base64", base64: this.previewBase64 }
          : null;
      case "edit": {
        const entry = this.history[ref.index];
        return entry?.imageBase64 != null
          ? { kind: "png-base64", base64: entry.imageBase64 }
          : null;
      }
      case "recovered": {
        const entry = this.history[ref.index];
        return entry?.recoveredBase64 != null
          ? { kind: "png-base64", base64: entry.recoveredBase64 }
          : null;
      }
    }
  }

  /** Select two displayable images for the slider comparison. */
  setComparison(a: ImageRef, b: ImageRef): void {
    if (this.imageSource(a) === null || this.imageSource(b) === null) {
      throw new Error("both comparison sides must have a displayable image");
    }
    this.comparison = [a, b];
    this.emit();
  }

  clearComparison(): void {
    this.comparison = null;
    this.emit();
  }
}
