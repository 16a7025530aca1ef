/** Prompt grammar shared with the service: "<upper phrase>, <lower phrase>".
 *
 * This module re-implements the server's builder and splitter so malformed
 * free text is caught before any request leaves the browser. The two sides
 * are pinned together by shared/prompt_grammar_vectors.json, which both test
 * suites assert against.
 */

export class PromptFormatError extends Error {
  override name = "PromptFormatError";
}

function countCommas(text: string): number {
  let n = 0;
  for (const ch of text) if (ch === ",") n += 1;
  return n;
}

/** Split a full prompt into [upper, lower]. An optional "and" may follow the
 *  comma. Throws PromptFormatError on anything else. */
export function splitText(prompt: string): [string, string] {
  const commas = countCommas(prompt);
  if (commas === 0) {
    throw new PromptFormatError(
      `prompt ${JSON.stringify(prompt)} needs one comma separating upper and lower`,
    );
  }
  if (commas > 1) {
    throw new PromptFormatError(`prompt ${JSON.stringify(prompt)} has more than one comma`);
  }
  const at = prompt.indexOf(",");
  const upper = prompt.slice(0, at).trim();
  let lower = prompt.slice(at + 1).trim();
  if (lower === "and") {
    lower = "";
  } else if (lower.startsWith("and ")) {
    lower = lower.slice(4).trim();
  }
  if (!upper || !lower) {
    throw new PromptFormatError(
      `prompt ${JSON.stringify(prompt)} leaves an empty side; both phrases are required`,
    );
  }
  return [upper, lower];
}

/** Inverse of splitText: "<upper>, <lower>". */
export function buildPrompt(upperAttr: string, lowerAttr: string): string {
  const upper = upperAttr.trim();
  const lower = lowerAttr.trim();
  if (!upper || !lower) {
    throw new Error("both attributes are required to build a prompt");
  }
  if (upper.includes(",") || lower.includes(",")) {
    throw new Error("attributes may not contain commas");
  }
  return `${upper}, ${lower}`;
}
