"""W+ latent codes: layer grouping, offset application, style mixing, serialization.

A latent code is an L x D float32 matrix, one style vector per generator
layer. Layers are partitioned into coarse / medium / fine groups: coarse
layers hold pose and body, medium layers garment type and shape, fine layers
texture and color. Edits only ever touch the medium and fine groups.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

LATENT_MAGIC = b"FTEXWP01"

GROUP_NAMES = ("coarse", "medium", "fine")


class LatentError(ValueError):
    """Invalid latent shapes, bounds, or values."""


class LatentFormatError(LatentError):
    """Malformed latent file (bad magic, truncated, or size mismatch)."""


@dataclass(frozen=True)
class GroupBounds:
    """Half-open layer-index ranges for the coarse, medium, and fine groups."""

    coarse: tuple[int, int]
    medium: tuple[int, int]
    fine: tuple[int, int]

    def validate(self, num_layers: int) -> None:
        c, m, f = self.coarse, self.medium, self.fine
        for name, (lo, hi) in zip(GROUP_NAMES, (c, m, f)):
            if not (0 <= lo < hi <= num_layers):
                raise LatentError(f"{name} bounds {lo, hi} invalid for {num_layers} layers")
        if c[0] != 0 or c[1] != m[0] or m[1] != f[0] or f[1] != num_layers:
            raise LatentError(
                f"bounds {c}, {m}, {f} do not partition [0, {num_layers}) in order"
            )

    def group(self, name: str) -> tuple[int, int]:
        if name not in GROUP_NAMES:
            raise LatentError(f"unknown group {name!r}, expected one of {GROUP_NAMES}")
        return getattr(self, name)

    @property
    def num_layers(self) -> int:
        return self.fine[1]


DEFAULT_GROUP_BOUNDS = GroupBounds(coarse=(0, 4), medium=(4, 8), fine=(8, 18))


def default_group_bounds(num_layers: int) -> GroupBounds:
    """Bounds for an arbitrary layer count, proportional to the 4/4/10 default."""
    if num_layers == 18:
        return DEFAULT_GROUP_BOUNDS
    if num_layers < 3:
        raise LatentError(f"need at least 3 layers to form three groups, got {num_layers}")
    n_coarse = max(1, round(num_layers * 4 / 18))
    n_medium = max(1, round(num_layers * 4 / 18))
    if n_coarse + n_medium >= num_layers:
        n_coarse = n_medium = 1
    return GroupBounds(
        coarse=(0, n_coarse),
        medium=(n_coarse, n_coarse + n_medium),
        fine=(n_coarse + n_medium, num_layers),
    )


def _as_latent_matrix(layers) -> torch.Tensor:
    t = torch.as_tensor(layers)
    if t.dim() != 2:
        raise LatentError(f"latent must be 2-D (layers x channels), got shape {tuple(t.shape)}")
    # float32 is the working precision; float64 passes through so gradient
    # checks can run the whole pipeline at double precision.
    if t.dtype != torch.float64:
        t = t.to(torch.float32)
    if not torch.isfinite(t).all():
        raise LatentError("latent contains non-finite entries")
    return t


@dataclass
class LatentCode:
    """An L x D latent matrix plus its coarse/medium/fine grouping."""

    layers: torch.Tensor
    bounds: GroupBounds

    def __post_init__(self):
        self.layers = _as_latent_matrix(self.layers)
        self.bounds.validate(self.num_layers)

    @property
    def num_layers(self) -> int:
        return self.layers.shape[0]

    @property
    def dim(self) -> int:
        return self.layers.shape[1]

    @property
    def coarse(self) -> torch.Tensor:
        lo, hi = self.bounds.coarse
        return self.layers[lo:hi]

    @property
    def medium(self) -> torch.Tensor:
        lo, hi = self.bounds.medium
        return self.layers[lo:hi]

    @property
    def fine(self) -> torch.Tensor:
        lo, hi = self.bounds.fine
        return self.layers[lo:hi]

    def group(self, name: str) -> torch.Tensor:
        lo, hi = self.bounds.group(name)
        return self.layers[lo:hi]

    def clone(self) -> "LatentCode":
        return LatentCode(self.layers.clone(), self.bounds)


@dataclass
class LatentOffset:
    """Additive offsets for the medium and fine groups; coarse has none."""

    delta_medium: torch.Tensor
    delta_fine: torch.Tensor

    def norm(self) -> torch.Tensor:
        """Euclidean norm of all offset entries taken together."""
        flat = torch.cat([self.delta_medium.reshape(-1), self.delta_fine.reshape(-1)])
        return torch.linalg.vector_norm(flat)


def zero_offset(w: LatentCode) -> LatentOffset:
    return LatentOffset(
        delta_medium=torch.zeros_like(w.medium),
        delta_fine=torch.zeros_like(w.fine),
    )


def split_latent(layers, bounds: GroupBounds) -> LatentCode:
    """Wrap an L x D matrix with validated group bounds."""
    return LatentCode(layers, bounds)


def apply_offsets(w: LatentCode, off: LatentOffset) -> LatentCode:
    """w' = [w_c, w_m + delta_m, w_f + delta_f]; the coarse group is copied bit-exactly."""
    if tuple(off.delta_medium.shape) != tuple(w.medium.shape):
        raise LatentError(
            f"medium offset shape {tuple(off.delta_medium.shape)} != {tuple(w.medium.shape)}"
        )
    if tuple(off.delta_fine.shape) != tuple(w.fine.shape):
        raise LatentError(
            f"fine offset shape {tuple(off.delta_fine.shape)} != {tuple(w.fine.shape)}"
        )
    layers = torch.cat([w.coarse, w.medium + off.delta_medium, w.fine + off.delta_fine], dim=0)
    return LatentCode(layers, w.bounds)


def style_mix(source: LatentCode, reference: LatentCode, group: str) -> LatentCode:
    """Copy one layer group from the reference code, keep the rest from the source.

    Used as an interpretability probe: regenerating after mixing a single
    group shows which image attributes that group controls.
    """
    if source.bounds != reference.bounds:
        raise LatentError(f"bounds differ: {source.bounds} vs {reference.bounds}")
    if tuple(source.layers.shape) != tuple(reference.layers.shape):
        raise LatentError(
            f"shape mismatch: {tuple(source.layers.shape)} vs {tuple(reference.layers.shape)}"
        )
    source.bounds.group(group)  # validates the name
    parts = [
        (reference if name == group else source).group(name) for name in GROUP_NAMES
    ]
    return LatentCode(torch.cat(parts, dim=0), source.bounds)


def save_latent(w: LatentCode, path) -> None:
    """Write the fixed binary layout: magic, u32 L, u32 D, then L*D little-endian float32."""
    payload = np.ascontiguousarray(w.layers.detach().numpy(), dtype="<f4").tobytes()
    header = LATENT_MAGIC + struct.pack("<II", w.num_layers, w.dim)
    Path(path).write_bytes(header + payload)


def load_latent(path, bounds: GroupBounds | None = None) -> LatentCode:
    """Read a latent file; bounds default to the proportional grouping for its layer count."""
    raw = Path(path).read_bytes()
    if len(raw) < len(LATENT_MAGIC) + 8:
        raise LatentFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[: len(LATENT_MAGIC)] != LATENT_MAGIC:
        raise LatentFormatError(f"{path}: bad magic {raw[:8]!r}")
    num_layers, dim = struct.unpack("<II", raw[8:16])
    expected = 16 + 4 * num_layers * dim
    if len(raw) < expected:
        raise LatentFormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(raw)}"
        )
    if len(raw) > expected:
        raise LatentFormatError(
            f"{path}: {len(raw) - expected} trailing bytes after declared {num_layers}x{dim} payload"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=16).reshape(num_layers, dim).copy()
    if bounds is None:
        bounds = default_group_bounds(num_layers)
    return LatentCode(torch.from_numpy(values), bounds)
