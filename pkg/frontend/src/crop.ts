import { MIN_PATCH_SIDE } from "./types.js";

/** Axis-aligned rectangle in image pixel coordinates. */
export interface Rect {
  x: number;
  y: number;
  width: number;
  height: number;
}

/** Minimal pixel buffer: tightly packed RGBA rows, like canvas ImageData. */
export interface PixelBuffer {
  width: number;
  height: number;
  data: Uint8ClampedArray<ArrayBuffer>;
}

/** Snap a drag rectangle to a square that fits inside a width x height image.
 *
 * The side is the smaller of the drag's sides (capped by the image), anchored
 * at the drag origin and shifted back inside the image if it overflows.
 * Coordinates are floored to whole pixels.
 */
export function snapToSquare(rect: Rect, imageWidth: number, imageHeight: number): Rect {
  if (imageWidth < 1 || imageHeight < 1) {
    throw new Error("image must be at least 1x1");
  }
  const side = Math.min(
    Math.max(1, Math.floor(Math.min(Math.abs(rect.width), Math.abs(rect.height)))),
    imageWidth,
    imageHeight,
  );
  let x = Math.floor(Math.min(rect.x, rect.x + rect.width));
  let y = Math.floor(Math.min(rect.y, rect.y + rect.height));
  x = Math.min(Math.max(0, x), imageWidth - side);
  y = Math.min(Math.max(0, y), imageHeight - side);
  return { x, y, width: side, height: side };
}

/** Error message when a selection is too small, or null when it is fine. */
export function cropSizeProblem(rect: Rect): string | null {
  if (rect.width !== rect.height) {
    return `selection must be square, got ${rect.width}x${rect.height}`;
  }
  if (rect.width < MIN_PATCH_SIDE) {
    return `selection is ${rect.width}x${rect.height}; the minimum is ${MIN_PATCH_SIDE}x${MIN_PATCH_SIDE} px`;
  }
  return null;
}

/** Copy a rectangle out of an RGBA buffer. The rect must lie inside. */
export function cropPixels(image: PixelBuffer, rect: Rect): PixelBuffer {
  const { x, y, width, height } = rect;
  if (
    !Number.isInteger(x) || !Number.isInteger(y) ||
    !Number.isInteger(width) || !Number.isInteger(height) ||
    width < 1 || height < 1 ||
    x < 0 || y < 0 || x + width > image.width || y + height > image.height
  ) {
    throw new Error(
      `crop ${JSON.stringify(rect)} does not fit a ${image.width}x${image.height} image`,
    );
  }
  const out = new Uint8ClampedArray(width * height * 4);
  for (let row = 0; row < height; row += 1) {
    const from = ((y + row) * image.width + x) * 4;
    out.set(image.data.subarray(from, from + width * 4), row * width * 4);
  }
  return { width, height, data: out };
}
