"""Image file and wire-format helpers: PNG files, PNG bytes, base64 strings.

Images are (H, W, 3) float tensors in [0, 1] everywhere inside the package;
these helpers are the only place 8-bit quantization happens.
"""

from __future__ import annotations

import base64
import binascii
from io import BytesIO
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage, UnidentifiedImageError

from .backbones import Image, validate_image


class ImageDecodeError(ValueError):
    """Bytes that do not decode to a usable RGB image."""


def to_uint8(img: Image) -> np.ndarray:
    img = validate_image(img)
    return np.rint(img.detach().numpy() * 255.0).clip(0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> Image:
    return torch.from_numpy(np.asarray(arr, dtype=np.float32) / 255.0)


def load_image_file(path) -> Image:
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            rgb = pil.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode image file {path}: {exc}") from exc
    return from_uint8(np.asarray(rgb))


def save_image_file(img: Image, path) -> None:
    PILImage.fromarray(to_uint8(img)).save(Path(path))


def png_bytes(img: Image) -> bytes:
    buf = BytesIO()
    PILImage.fromarray(to_uint8(img)).save(buf, format="PNG")
    return buf.getvalue()


def image_from_bytes(data: bytes) -> Image:
    if not data:
        raise ImageDecodeError("empty image payload")
    try:
        with PILImage.open(BytesIO(data)) as pil:
            rgb = pil.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
    return from_uint8(np.asarray(rgb))


def encode_png_base64(img: Image) -> str:
    return base64.b64encode(png_bytes(img)).decode("ascii")


def decode_png_base64(text: str) -> Image:
    try:
        data = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ImageDecodeError(f"invalid base64 image payload: {exc}") from exc
    return image_from_bytes(data)
