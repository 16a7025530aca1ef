import { z } from "zod";

/** Smallest accepted side, in pixels, for a square texture swatch. */
export const MIN_PATCH_SIDE = 16;

export const HealthzSchema = z.object({
  ready: z.boolean(),
  backbone_config_hash: z.string(),
});
export type Healthz = z.infer<typeof HealthzSchema>;

export const VocabularySchema = z.object({
  upper: z.array(z.string()),
  lower: z.array(z.string()),
  pairs: z.array(z.tuple([z.string(), z.string()])),
});
export type Vocabulary = z.infer<typeof VocabularySchema>;

export const SessionCreatedSchema = z.object({
  session_id: z.string(),
  preview: z.string(),
});
export type SessionCreated = z.infer<typeof SessionCreatedSchema>;

export const EditResponseSchema = z.object({
  edit_index: z.number().int().nonnegative(),
  image: z.string(),
});
export type EditResponse = z.infer<typeof EditResponseSchema>;

export const RecoverResponseSchema = z.object({
  image: z.string(),
});
export type RecoverResponse = z.infer<typeof RecoverResponseSchema>;

export const HistoryRowSchema = z.object({
  edit_index: z.number().int().nonnegative(),
  condition: z.record(z.string(), z.unknown()),
  recovered: z.boolean(),
});
export type HistoryRow = z.infer<typeof HistoryRowSchema>;

export const SessionSummarySchema = z.object({
  session_id: z.string(),
  created_at: z.number(),
  history: z.array(HistoryRowSchema),
});
export type SessionSummary = z.infer<typeof SessionSummarySchema>;

/** Body of POST /sessions/{id}/edits. At least one condition must be set. */
export interface EditRequest {
  text?: string;
  text_upper?: string;
  text_lower?: string;
  patch_upper?: string;
  patch_lower?: string;
  base?: number;
}

export type SwatchOrigin = "upload" | "crop";
export type SwatchSide = "upper" | "lower";

export interface Swatch {
  id: number;
  /** Base64 PNG, held verbatim; the client never re-encodes it. */
  base64: string;
  origin: SwatchOrigin;
  sidePx: number;
  assigned: SwatchSide | null;
}

export interface HistoryEntry {
  editIndex: number;
  condition: Record<string, unknown>;
  /** Base64 PNG exactly as returned by the edit endpoint; null after a
   *  reload, when only server metadata is available. */
  imageBase64: string | null;
  /** Base64 PNG exactly as returned by the recover endpoint. */
  recoveredBase64: string | null;
  recovered: boolean;
  recovering: boolean;
}

/** A displayable image surface. Edits and recoveries point into history. */
export type ImageRef =
  | { kind: "original" }
  | { kind: "preview" }
  | { kind: "edit"; index: number }
  | { kind: "recovered"; index: number };
