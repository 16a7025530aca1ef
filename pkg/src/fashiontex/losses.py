"""Training objectives for the editing mapper.

Six terms: a calibrated type loss in the joint text/image space, a
Gram-matrix texture loss over a feature pyramid, an identity loss on face
embeddings, a background preservation loss, a skin color loss in LAB, and a
regularizer on the latent offsets. All terms are nonnegative, differentiable
almost everywhere, and pure functions of their inputs; the texture crop
sampler takes an explicit random generator from the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .backbones import BackboneSet, Embedding, Image
from .latent import LatentOffset
from .mapper import MIN_PATCH_SIDE, EditCondition

TERM_NAMES = ("type", "txr", "id", "skin", "bg", "norm")


class LossInputError(ValueError):
    """Loss called with inputs outside its domain."""


def _vec(x) -> torch.Tensor:
    if isinstance(x, Embedding):
        return x.values
    t = torch.as_tensor(x)
    if t.dtype not in (torch.float32, torch.float64):
        t = t.to(torch.float32)
    return t.reshape(-1)


def euclidean_norm(x: torch.Tensor) -> torch.Tensor:
    """sqrt of the sum of squares, with a finite (zero) gradient at the origin.

    A plain sqrt backpropagates an infinite gradient when the input is exactly
    zero; routing the zero case through the (zero) sum of squares keeps the
    value exact and the gradient zero.
    """
    sumsq = (x * x).sum()
    safe = torch.sqrt(torch.clamp(sumsq, min=torch.finfo(sumsq.dtype).tiny))
    return torch.where(sumsq > 0, safe, sumsq)


def cosine_distance(a, b) -> torch.Tensor:
    """1 - cos(a, b), in [0, 2]."""
    va, vb = _vec(a), _vec(b)
    if va.shape != vb.shape:
        raise LossInputError(f"embedding dims differ: {va.shape[0]} vs {vb.shape[0]}")
    sa = (va * va).sum()
    sb = (vb * vb).sum()
    if float(sa.detach()) == 0.0 or float(sb.detach()) == 0.0:
        raise LossInputError("cosine distance undefined for a zero-norm input")
    # sqrt(sa * sb) instead of sqrt(sa) * sqrt(sb): when a == b this equals
    # the dot product bit-for-bit, so equal inputs give a distance of exactly 0.
    return 1.0 - (va * vb).sum() / torch.sqrt(sa * sb)


def type_loss(e_ie, e_ii, e_ti, e_t) -> torch.Tensor:
    """Cosine distance between the edited-image embedding and the calibrated target.

    The calibrated target shifts the source-image embedding by the text
    difference: E_Ii + (E_t - E_ti). Grouping the text terms first makes the
    shift exactly zero when target and source tags coincide, so the loss then
    reduces exactly to cosine_distance(E_Ie, E_Ii).
    """
    ie, ii, ti, t = _vec(e_ie), _vec(e_ii), _vec(e_ti), _vec(e_t)
    dims = {v.shape[0] for v in (ie, ii, ti, t)}
    if len(dims) != 1:
        raise LossInputError(f"all four embeddings must share one dimension, got {sorted(dims)}")
    target = ii + (t - ti)
    if float((target * target).sum()) == 0.0:
        raise LossInputError(
            "calibrated target embedding is zero; source tag cancels the image embedding"
        )
    return cosine_distance(ie, target)


def gram(f: torch.Tensor, normalized: bool = True) -> torch.Tensor:
    """Channel correlation matrix F F^T of a C x N feature map, optionally / (C*N)."""
    f = torch.as_tensor(f)
    if f.dim() != 2:
        raise LossInputError(f"feature map must be 2-D (C x N), got shape {tuple(f.shape)}")
    g = f @ f.T
    if normalized:
        g = g / (f.shape[0] * f.shape[1])
    return g


def default_crop_size(height: int, width: int) -> int:
    """A quarter of the short image side: 64 px at 256, 16 px at 64."""
    return max(MIN_PATCH_SIDE, round(min(height, width) / 4))


def sample_crop_window(mask: torch.Tensor, crop_size: int,
                       rng: np.random.Generator) -> tuple[int, int]:
    """Uniformly pick a (top, left) whose crop window lies entirely inside the mask."""
    m = torch.as_tensor(mask)
    if m.dim() != 2:
        raise LossInputError(f"mask must be 2-D, got shape {tuple(m.shape)}")
    h, w = int(m.shape[0]), int(m.shape[1])
    if crop_size < 1:
        raise LossInputError(f"crop size must be positive, got {crop_size}")
    if crop_size > h or crop_size > w:
        raise LossInputError(f"crop {crop_size} px exceeds the {h}x{w} mask")
    binary = (m > 0.5).to(torch.float32)
    # Integral image: a window is valid iff its mask sum equals its area.
    # Sums stay integral and exactly representable in float32 here.
    s = F.pad(binary.cumsum(0).cumsum(1), (1, 0, 1, 0))
    c = crop_size
    window_sums = s[c:, c:] - s[:-c, c:] - s[c:, :-c] + s[:-c, :-c]
    valid = (window_sums == float(c * c)).nonzero()
    if valid.shape[0] == 0:
        raise LossInputError(f"region has no {c}x{c} window fully inside the mask")
    pick = valid[int(rng.integers(valid.shape[0]))]
    return int(pick[0]), int(pick[1])


def texture_loss(i_e: Image, region: str, patch: Image, parser, extractor,
                 rng: np.random.Generator, crop_size: int | None = None,
                 gram_normalized: bool = True) -> torch.Tensor:
    """Sum over pyramid levels of the L1 distance between crop and patch Gram matrices.

    The crop is a random square window sampled fully inside the named cloth
    region of the edited image.
    """
    i_e = torch.as_tensor(i_e)
    mask = parser.parse(i_e).region(region)
    size = crop_size or default_crop_size(int(i_e.shape[0]), int(i_e.shape[1]))
    top, left = sample_crop_window(mask, size, rng)
    crop = i_e[top : top + size, left : left + size, :]
    crop_pyramid = extractor.features(crop)
    patch_pyramid = extractor.features(patch)
    loss = torch.zeros((), dtype=i_e.dtype)
    for level_crop, level_patch in zip(crop_pyramid, patch_pyramid):
        diff = gram(level_crop, gram_normalized) - gram(level_patch, gram_normalized)
        loss = loss + diff.abs().sum()
    return loss


def identity_loss(i_e: Image, i_i: Image, identity_embedder) -> torch.Tensor:
    """Cosine distance between the face identity embeddings of the two images."""
    if tuple(i_e.shape) != tuple(i_i.shape):
        raise LossInputError(f"image shapes differ: {tuple(i_e.shape)} vs {tuple(i_i.shape)}")
    return cosine_distance(identity_embedder.embed(i_e), identity_embedder.embed(i_i))


def background_loss(i_e: Image, i_i: Image, parser) -> torch.Tensor:
    """Euclidean norm of the difference between the two images' non-cloth pixels.

    Each image is masked by its own parse's non-cloth region.
    """
    if tuple(i_e.shape) != tuple(i_i.shape):
        raise LossInputError(f"image shapes differ: {tuple(i_e.shape)} vs {tuple(i_i.shape)}")
    bg_e = parser.parse(i_e).background_noncloth.unsqueeze(-1)
    bg_i = parser.parse(i_i).background_noncloth.unsqueeze(-1)
    return euclidean_norm(i_e * bg_e - i_i * bg_i)


_XYZ_FROM_RGB = (
    (0.412453, 0.357580, 0.180423),
    (0.212671, 0.715160, 0.072169),
    (0.019334, 0.119193, 0.950227),
)
_WHITE_D65 = (0.95047, 1.0, 1.08883)


def srgb_to_lab(img: torch.Tensor) -> torch.Tensor:
    """sRGB in [0,1] to CIE LAB under the D65 white point, differentiable.

    Matches the standard colorimetry pipeline: sRGB linearization, the
    RGB-to-XYZ primaries matrix, then the cube-root LAB encoding.
    """
    t = torch.as_tensor(img)
    if t.shape[-1] != 3:
        raise LossInputError(f"expected trailing RGB channel axis, got shape {tuple(t.shape)}")
    if t.dtype not in (torch.float32, torch.float64):
        t = t.to(torch.float32)
    linear = torch.where(t > 0.04045, ((t + 0.055) / 1.055) ** 2.4, t / 12.92)
    m = torch.tensor(_XYZ_FROM_RGB, dtype=t.dtype)
    white = torch.tensor(_WHITE_D65, dtype=t.dtype)
    ratio = (linear @ m.T) / white
    # Clamp inside the cube-root branch only: it never changes selected values
    # (the linear branch takes over below the threshold) but keeps the
    # unselected branch's gradient finite at ratio == 0.
    f = torch.where(
        ratio > 0.008856,
        torch.clamp(ratio, min=1e-8) ** (1.0 / 3.0),
        7.787 * ratio + 16.0 / 116.0,
    )
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lum = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return torch.stack([lum, a, b], dim=-1)


def skin_loss(i_e: Image, i_i: Image, parser) -> torch.Tensor:
    """L1 distance between the mean LAB color of each image's skin region."""
    if tuple(i_e.shape) != tuple(i_i.shape):
        raise LossInputError(f"image shapes differ: {tuple(i_e.shape)} vs {tuple(i_i.shape)}")

    def masked_mean_lab(img):
        mask = parser.parse(img).skin
        count = mask.sum()
        if float(count) == 0.0:
            raise LossInputError("skin region is empty; skin loss undefined")
        lab = srgb_to_lab(img)
        return (lab * mask.unsqueeze(-1)).sum(dim=(0, 1)) / count

    return (masked_mean_lab(i_e) - masked_mean_lab(i_i)).abs().sum()


def norm_loss(off: LatentOffset) -> torch.Tensor:
    """Euclidean norm of all offset entries taken together."""
    flat = torch.cat([off.delta_medium.reshape(-1), off.delta_fine.reshape(-1)])
    return euclidean_norm(flat)


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights. Defaults balance toy-scale term magnitudes; tune per deployment."""

    lambda_type: float = 1.0
    lambda_txr: float = 0.02
    lambda_id: float = 0.1
    lambda_skin: float = 1.0
    lambda_bg: float = 1.0
    lambda_norm: float = 0.8

    def __post_init__(self):
        values = self.as_dict()
        for name, value in values.items():
            if value < 0:
                raise ValueError(f"loss weight for {name!r} must be nonnegative, got {value}")
        if all(v == 0 for v in values.values()):
            raise ValueError("at least one loss weight must be positive")

    def as_dict(self) -> dict[str, float]:
        return {
            "type": self.lambda_type,
            "txr": self.lambda_txr,
            "id": self.lambda_id,
            "skin": self.lambda_skin,
            "bg": self.lambda_bg,
            "norm": self.lambda_norm,
        }


@dataclass
class LossReport:
    """Raw and weighted values of every term plus the weighted total."""

    raw: dict[str, float]
    weighted: dict[str, float]
    total: float
    tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)

    def log_line(self, step: int) -> str:
        parts = [f"step={step}"]
        parts += [f"{name}={self.raw[name]!r}" for name in TERM_NAMES]
        parts.append(f"total={self.total!r}")
        return " ".join(parts)

    @staticmethod
    def parse_log_line(line: str) -> tuple[int, dict[str, float]]:
        fields = dict(item.split("=", 1) for item in line.split())
        step = int(fields.pop("step"))
        return step, {k: float(v) for k, v in fields.items()}


def _prompt(upper: str, lower: str) -> str:
    return f"{upper}, {lower}"


def total_loss(i_e: Image, i_i: Image, offsets: LatentOffset, cond: EditCondition,
               source_tags: tuple[str, str], backbones: BackboneSet,
               weights: LossWeights, rng: np.random.Generator,
               crop_size: int | None = None,
               gram_normalized: bool = True) -> LossReport:
    """Weighted sum of all six terms for one edited/original image pair.

    Absent condition modalities contribute exact-zero type/texture terms.
    Text targets omit nothing: a one-sided text condition keeps the source
    tag on the other side, so the calibrated embedding only moves where the
    condition asks it to.
    """
    i_e = torch.as_tensor(i_e)
    zero = torch.zeros((), dtype=i_e.dtype if i_e.is_floating_point() else torch.float32)

    term_type = zero
    if cond.has_text:
        src_upper, src_lower = source_tags
        if not src_upper or not src_lower:
            raise LossInputError("type loss needs both source cloth tags")
        joint = backbones.joint_embedder
        e_t = joint.embed_text(_prompt(cond.text_upper or src_upper,
                                       cond.text_lower or src_lower))
        e_ti = joint.embed_text(_prompt(src_upper, src_lower))
        term_type = type_loss(joint.embed_image(i_e), joint.embed_image(i_i), e_ti, e_t)

    term_txr = zero
    for side, patch in (("upper", cond.patch_upper), ("lower", cond.patch_lower)):
        if patch is not None:
            term_txr = term_txr + texture_loss(
                i_e, side, patch, backbones.parser, backbones.texture_extractor,
                rng, crop_size, gram_normalized,
            )

    terms = {
        "type": term_type,
        "txr": term_txr,
        "id": identity_loss(i_e, i_i, backbones.identity_embedder),
        "skin": skin_loss(i_e, i_i, backbones.parser),
        "bg": background_loss(i_e, i_i, backbones.parser),
        "norm": norm_loss(offsets),
    }
    w = weights.as_dict()
    total = None
    for name in TERM_NAMES:
        piece = w[name] * terms[name]
        total = piece if total is None else total + piece
    raw = {name: float(terms[name].detach()) for name in TERM_NAMES}
    return LossReport(
        raw=raw,
        weighted={name: w[name] * raw[name] for name in TERM_NAMES},
        total=float(total.detach()),
        tensor=total,
    )
