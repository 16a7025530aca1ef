import { describe, expect, it } from "vitest";
import { PixelBuffer, cropPixels, cropSizeProblem, snapToSquare } from "../src/crop.js";
import { MIN_PATCH_SIDE } from "../src/types.js";

function checkerboard(width: number, height: number): PixelBuffer {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y += 1) {
    for (let x = 0; x < width; x += 1) {
      const v = (x + y) % 2 === 0 ? 255 : 0;
      const at = (y * width + x) * 4;
      data[at] = v;
      data[at + 1] = x;
      data[at + 2] = y;
      data[at + 3] = 255;
    }
  }
  return { width, height, data };
}

describe("snapToSquare", () => {
  it("keeps a square drag unchanged", () => {
    expect(snapToSquare({ x: 3, y: 5, width: 20, height: 20 }, 64, 64)).toEqual({
      x: 3,
      y: 5,
      width: 20,
      height: 20,
    });
  });

  it("snaps a non-square drag to the smaller side", () => {
    const snapped = snapToSquare({ x: 0, y: 0, width: 40, height: 24 }, 64, 64);
    expect(snapped.width).toBe(24);
    expect(snapped.height).toBe(24);
  });

  it("normalizes drags that go up and to the left", () => {
    const snapped = snapToSquare({ x: 30, y: 30, width: -20, height: -20 }, 64, 64);
    expect(snapped).toEqual({ x: 10, y: 10, width: 20, height: 20 });
  });

  it("shifts the square back inside the image", () => {
    const snapped = snapToSquare({ x: 60, y: 60, width: 20, height: 20 }, 64, 64);
    expect(snapped.x + snapped.width).toBeLessThanOrEqual(64);
    expect(snapped.y + snapped.height).toBeLessThanOrEqual(64);
    expect(snapped.width).toBe(20);
  });

  it("caps the side at the image size", () => {
    const snapped = snapToSquare({ x: 0, y: 0, width: 100, height: 100 }, 48, 64);
    expect(snapped).toEqual({ x: 0, y: 0, width: 48, height: 48 });
  });
});

describe("cropSizeProblem", () => {
  it("accepts the minimum size exactly", () => {
    expect(
      cropSizeProblem({ x: 0, y: 0, width: MIN_PATCH_SIDE, height: MIN_PATCH_SIDE }),
    ).toBeNull();
  });

  it("rejects an 8x8 selection with a minimum-size hint", () => {
    const problem = cropSizeProblem({ x: 0, y: 0, width: 8, height: 8 });
    expect(problem).toMatch(/minimum/);
    expect(problem).toMatch(String(MIN_PATCH_SIDE));
  });

  it("rejects non-square rectangles", () => {
    expect(cropSizeProblem({ x: 0, y: 0, width: 20, height: 24 })).toMatch(/square/);
  });
});

describe("cropPixels", () => {
  it("copies exactly the selected rows and columns", () => {
    const image = checkerboard(16, 12);
    const out = cropPixels(image, { x: 4, y: 2, width: 6, height: 6 });
    expect(out.width).toBe(6);
    expect(out.height).toBe(6);
    for (let y = 0; y < 6; y += 1) {
      for (let x = 0; x < 6; x += 1) {
        const got = (y * 6 + x) * 4;
        expect(out.data[got + 1]).toBe(4 + x);
        expect(out.data[got + 2]).toBe(2 + y);
      }
    }
  });

  it("round-trips a full-image crop", () => {
    const image = checkerboard(8, 8);
    const out = cropPixels(image, { x: 0, y: 0, width: 8, height: 8 });
    expect(Array.from(out.data)).toEqual(Array.from(image.data));
  });

  it("rejects crops that leave the image", () => {
    const image = checkerboard(8, 8);
    expect(() => cropPixels(image, { x: 4, y: 4, width: 8, height: 8 })).toThrow(/fit/);
    expect(() => cropPixels(image, { x: -1, y: 0, width: 4, height: 4 })).toThrow(/fit/);
  });

  it("rejects fractional rectangles", () => {
    const image = checkerboard(8, 8);
    expect(() => cropPixels(image, { x: 0.5, y: 0, width: 4, height: 4 })).toThrow(/fit/);
  });
});
