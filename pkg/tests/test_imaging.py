"""Image codecs: uint8 quantization, PNG bytes, base64, and decode errors."""

import numpy as np
import pytest
import torch

from fashiontex.imaging import (
    ImageDecodeError,
    decode_png_base64,
    encode_png_base64,
    from_uint8,
    image_from_bytes,
    load_image_file,
    png_bytes,
    save_image_file,
    to_uint8,
)

from conftest import make_image


def test_uint8_round_trip_is_exact_on_quantized_values():
    arr = np.arange(256, dtype=np.uint8).reshape(8, 32)[..., None].repeat(3, axis=2)
    back = to_uint8(from_uint8(arr))
    assert np.array_equal(back, arr)


def test_png_bytes_decode_to_same_pixels():
    img = make_image(4)
    back = image_from_bytes(png_bytes(img))
    assert torch.equal(to_uint8_t(back), to_uint8_t(img))


def to_uint8_t(img):
    return torch.from_numpy(to_uint8(img).copy())


def test_base64_round_trip_is_lossless_after_quantization():
    img = from_uint8(to_uint8(make_image(5)))
    back = decode_png_base64(encode_png_base64(img))
    assert torch.equal(back, img)


def test_file_round_trip(tmp_path):
    img = from_uint8(to_uint8(make_image(6)))
    path = tmp_path / "img.png"
    save_image_file(img, path)
    assert torch.equal(load_image_file(path), img)


def test_empty_payload_rejected():
    with pytest.raises(ImageDecodeError):
        image_from_bytes(b"")


def test_garbage_bytes_rejected():
    with pytest.raises(ImageDecodeError):
        image_from_bytes(b"not a png at all")


def test_invalid_base64_rejected():
    with pytest.raises(ImageDecodeError):
        decode_png_base64("@@@not base64@@@")


def test_unreadable_file_rejected(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"\x00\x01\x02")
    with pytest.raises(ImageDecodeError):
        load_image_file(path)
