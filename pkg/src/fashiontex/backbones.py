"""Pluggable model handles the pipeline consumes, plus deterministic toy stand-ins.

Seven roles: a latent-to-image generator, an image-to-latent inverter, a
joint text/image embedder, a texture feature extractor, a face identity
embedder, a human parser, and a perceptual distance. Real checkpoints plug
in through adapter loaders; the toy variants are pure functions of
(seed, input), run on CPU in milliseconds, and keep every contract the real
models have, so the whole pipeline trains and tests at desk scale.
"""

from __future__ import annotations

import hashlib
import importlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np
import torch
import torch.nn.functional as F

from .latent import GroupBounds, LatentCode, LatentError, default_group_bounds

Image = torch.Tensor  # (H, W, 3) float32 in [0, 1]


class BackboneError(RuntimeError):
    """Backbone configuration or loading failure."""


def validate_image(img: torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(img)
    if t.dim() != 3 or t.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got shape {tuple(t.shape)}")
    if t.shape[0] < 1 or t.shape[1] < 1:
        raise ValueError(f"image must have positive size, got {tuple(t.shape)}")
    if t.dtype != torch.float64:
        t = t.to(torch.float32)
    if not torch.isfinite(t).all():
        raise ValueError("image contains non-finite values")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return t


@dataclass
class Embedding:
    """A feature vector tagged with the space it lives in."""

    values: torch.Tensor
    space: str  # joint_text_image | identity | texture

    def __post_init__(self):
        values = torch.as_tensor(self.values)
        if values.dtype != torch.float64:
            values = values.to(torch.float32)
        self.values = values.reshape(-1)
        if not torch.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class ParsingMask:
    """Per-region binary masks; non-cloth is the exact complement of cloth."""

    upper_cloth: torch.Tensor
    lower_cloth: torch.Tensor
    skin: torch.Tensor
    face: torch.Tensor
    background_noncloth: torch.Tensor

    def __post_init__(self):
        shapes = {tuple(m.shape) for m in self._all()}
        if len(shapes) != 1:
            raise ValueError(f"mask shapes differ: {shapes}")
        for m in self._all():
            if m.dim() != 2:
                raise ValueError(f"masks must be 2-D, got {tuple(m.shape)}")
            if not torch.logical_or(m == 0, m == 1).all():
                raise ValueError("masks must be binary")
        if not torch.equal(self.background_noncloth, 1.0 - self.cloth):
            raise ValueError("background_noncloth must be the complement of the cloth region")

    def _all(self):
        return (self.upper_cloth, self.lower_cloth, self.skin, self.face, self.background_noncloth)

    @property
    def cloth(self) -> torch.Tensor:
        return torch.clamp(self.upper_cloth + self.lower_cloth, max=1.0)

    def region(self, name: str) -> torch.Tensor:
        if name == "upper":
            return self.upper_cloth
        if name == "lower":
            return self.lower_cloth
        raise ValueError(f"unknown cloth region {name!r}, expected 'upper' or 'lower'")


@dataclass
class FeaturePyramid:
    """Four feature maps, each channels x flattened-positions, coarse to fine pooling."""

    levels: tuple[torch.Tensor, ...]

    def __post_init__(self):
        self.levels = tuple(self.levels)
        if len(self.levels) != 4:
            raise ValueError(f"pyramid must have exactly 4 levels, got {len(self.levels)}")
        for lvl in self.levels:
            if lvl.dim() != 2:
                raise ValueError(f"each level must be 2-D (C x N), got {tuple(lvl.shape)}")
            if not torch.isfinite(lvl).all():
                raise ValueError("pyramid contains non-finite values")

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


# ---------------------------------------------------------------------------
# Interfaces


class Generator(Protocol):
    num_layers: int
    dim: int
    image_size: int
    bounds: GroupBounds

    def generate(self, w: LatentCode) -> Image: ...

    def clone(self) -> "Generator": ...

    def trainable_parameters(self) -> dict[str, torch.Tensor]: ...


class Inverter(Protocol):
    def invert(self, img: Image) -> LatentCode: ...


class JointEmbedder(Protocol):
    def embed_text(self, text: str) -> Embedding: ...

    def embed_image(self, img: Image) -> Embedding: ...


class TextureExtractor(Protocol):
    texture_dim: int

    def features(self, img: Image) -> FeaturePyramid: ...


class IdentityEmbedder(Protocol):
    def embed(self, img: Image) -> Embedding: ...


class Parser(Protocol):
    def parse(self, img: Image) -> ParsingMask: ...

    def category_masks(self, img: Image) -> dict[str, torch.Tensor]: ...


class Perceptual(Protocol):
    def features(self, img: Image) -> torch.Tensor: ...

    def distance(self, a: Image, b: Image) -> torch.Tensor: ...


def _seeded_matrix(seed_key: str, rows: int, cols: int, scale: float) -> torch.Tensor:
    """Deterministic Gaussian matrix derived from a string key (process-independent)."""
    digest = hashlib.sha256(seed_key.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return torch.from_numpy(rng.standard_normal((rows, cols)).astype(np.float32)) * scale


# ---------------------------------------------------------------------------
# Toy generator and its exact linear inverter

# Rows the medium/fine generator bases may touch: the union of the parser's
# upper and lower cloth bands (see _BANDS below). [16, 56) at 64 px.
_CLOTH_ROWS = (1 / 4, 7 / 8)


def _cosine_basis(freqs: list[tuple[int, int]], size: int) -> torch.Tensor:
    """Stack of separable 2-D cosine bases, shape (K, size, size)."""
    xs = (torch.arange(size, dtype=torch.float32) + 0.5) / size
    rows = []
    for u, v in freqs:
        rows.append(torch.outer(torch.cos(math.pi * u * xs), torch.cos(math.pi * v * xs)))
    return torch.stack(rows)


_COARSE_FREQS = [(0, 0), (0, 1), (1, 0)]
_MEDIUM_FREQS = [(0, 2), (2, 0), (1, 1), (0, 3), (3, 0), (1, 2), (2, 1)]
_FINE_FREQS = [(u, v) for u in (6, 8, 10, 12) for v in (6, 8, 10, 12)]


class ToyGenerator:
    """Latent-to-image map built from frequency-split cosine bases.

    The coarse group drives global low-frequency structure, the medium group
    garment-band shapes, and the fine group garment-band detail. Medium and
    fine bases are windowed to the cloth rows, so editing those groups can
    never move a pixel outside the garment region; the coarse group alone
    owns the face, skin, and background rows. The map is smooth (linear
    projection + sigmoid) and differentiable in both the latent and the
    parameters.
    """

    GAIN = 0.6

    def __init__(self, num_layers=8, dim=32, image_size=64, seed=7,
                 bounds: GroupBounds | None = None):
        self.num_layers = num_layers
        self.dim = dim
        self.image_size = image_size
        self.seed = seed
        self.bounds = bounds or default_group_bounds(num_layers)
        self.bounds.validate(num_layers)

        self._group_sizes = {
            "coarse": self.bounds.coarse[1] - self.bounds.coarse[0],
            "medium": self.bounds.medium[1] - self.bounds.medium[0],
            "fine": self.bounds.fine[1] - self.bounds.fine[0],
        }
        window = torch.zeros(image_size)
        lo, hi = _CLOTH_ROWS
        window[int(lo * image_size) : int(hi * image_size)] = 1.0
        freqs = {"coarse": _COARSE_FREQS, "medium": _MEDIUM_FREQS, "fine": _FINE_FREQS}
        self._bases: dict[str, torch.Tensor] = {}
        self._params: dict[str, torch.Tensor] = {}
        for name, fr in freqs.items():
            k = len(fr)
            basis = _cosine_basis(fr, image_size)  # (K, H, W)
            if name != "coarse":
                basis = basis * window[None, :, None]
            colors = _seeded_matrix(f"toygen:{seed}:{name}:colors", k, 3, 1.0)
            self._bases[name] = basis[:, :, :, None] * colors[:, None, None, :]
            n_in = self._group_sizes[name] * dim
            self._params[f"proj_{name}"] = _seeded_matrix(
                f"toygen:{seed}:{name}:proj", k, n_in, 1.0 / math.sqrt(n_in)
            )
            self._params[f"bias_{name}"] = torch.zeros(k)

    def trainable_parameters(self) -> dict[str, torch.Tensor]:
        return self._params

    def generate(self, w: LatentCode) -> Image:
        if w.num_layers != self.num_layers or w.dim != self.dim:
            raise LatentError(
                f"latent {w.num_layers}x{w.dim} does not match generator "
                f"{self.num_layers}x{self.dim}"
            )
        if w.bounds != self.bounds:
            raise LatentError(f"latent bounds {w.bounds} != generator bounds {self.bounds}")
        dtype = w.layers.dtype
        pre = None
        for name in ("coarse", "medium", "fine"):
            coef = self._params[f"proj_{name}"].to(dtype) @ w.group(name).reshape(-1)
            coef = coef + self._params[f"bias_{name}"].to(dtype)
            term = torch.einsum("k,khwc->hwc", coef, self._bases[name].to(dtype))
            pre = term if pre is None else pre + term
        return torch.sigmoid(self.GAIN * pre)

    def clone(self) -> "ToyGenerator":
        """Private copy whose parameters are trainable; the original is untouched."""
        other = ToyGenerator(self.num_layers, self.dim, self.image_size, self.seed, self.bounds)
        other._params = {
            k: v.detach().clone().requires_grad_(True) for k, v in self._params.items()
        }
        return other

    # Linear structure exposed for the toy inverter.
    def _design_matrix(self) -> tuple[torch.Tensor, torch.Tensor, list[tuple[str, int]]]:
        """Rows of the pixel-space design matrix (pre-sigmoid), per basis function."""
        rows, biases, layout = [], [], []
        for name in ("coarse", "medium", "fine"):
            b = self._bases[name] * self.GAIN
            rows.append(b.reshape(b.shape[0], -1))
            biases.append(self._params[f"bias_{name}"].detach())
            layout.append((name, b.shape[0]))
        return torch.cat(rows), torch.cat(biases), layout


class ToyInverter:
    """Least-squares inverse of the toy generator's linear stage.

    Recovers basis coefficients from logit pixels, then maps each group's
    coefficients back to a minimum-norm latent via the pseudo-inverse of the
    generator's projection. Images the generator produced round-trip almost
    exactly; arbitrary images project onto the closest generator output.
    """

    def __init__(self, generator: ToyGenerator):
        self._gen = generator
        phi, bias, layout = generator._design_matrix()
        gram = phi @ phi.T
        self._solve = torch.linalg.solve(gram, phi)  # (K_total, H*W*3)
        self._bias = bias
        self._layout = layout
        self._pinv = {
            name: torch.linalg.pinv(generator._params[f"proj_{name}"].detach())
            for name, _ in layout
        }

    def invert(self, img: Image) -> LatentCode:
        img = validate_image(img)
        if img.shape[0] != self._gen.image_size or img.shape[1] != self._gen.image_size:
            raise ValueError(
                f"inverter expects {self._gen.image_size}x{self._gen.image_size} images, "
                f"got {tuple(img.shape[:2])}"
            )
        z = torch.logit(img.clamp(1e-4, 1.0 - 1e-4)).reshape(-1)
        coef = self._solve @ z - self._bias
        pieces, offset = [], 0
        for name, k in self._layout:
            group_coef = coef[offset : offset + k]
            n_rows = self._gen._group_sizes[name]
            pieces.append((self._pinv[name] @ group_coef).reshape(n_rows, self._gen.dim))
            offset += k
        return LatentCode(torch.cat(pieces), self._gen.bounds)


# ---------------------------------------------------------------------------
# Toy embedders, extractor, parser, perceptual


class ToyJointEmbedder:
    """Joint text/image embedding space with exactly additive text semantics.

    Every vocabulary token maps to a fixed seeded vector and a phrase embeds
    to the sum of its token vectors, so embedding arithmetic like
    embed("short pants") - embed("pants") == embed("short") holds exactly.
    Real joint embedders only satisfy that approximately; making it exact
    here turns the type-loss calibration algebra into a checkable identity.
    """

    def __init__(self, text_dim=32, image_dim=32, image_size=64, seed=7):
        if text_dim != image_dim:
            raise BackboneError(
                f"joint embedder text dim {text_dim} != image dim {image_dim}"
            )
        self.dim = text_dim
        self.image_size = image_size
        self.seed = seed
        n = image_size * image_size * 3
        self._proj = _seeded_matrix(f"toyjoint:{seed}:image", text_dim, n, 1.0 / math.sqrt(n))
        self._token_cache: dict[str, torch.Tensor] = {}

    @staticmethod
    def tokenize(text: str) -> list[str]:
        import re

        return re.findall(r"[a-z0-9]+", text.lower())

    def _token_vector(self, token: str) -> torch.Tensor:
        if token not in self._token_cache:
            self._token_cache[token] = _seeded_matrix(
                f"toyjoint:{self.seed}:token:{token}", 1, self.dim, 1.0
            ).reshape(-1)
        return self._token_cache[token]

    def embed_text(self, text: str) -> Embedding:
        vec = torch.zeros(self.dim)
        for token in self.tokenize(text):
            vec = vec + self._token_vector(token)
        return Embedding(vec, "joint_text_image")

    def embed_image(self, img: Image) -> Embedding:
        if not (isinstance(img, torch.Tensor) and img.requires_grad):
            img = validate_image(img)
        vec = self._proj.to(img.dtype) @ (img.reshape(-1) - 0.5)
        return Embedding(vec, "joint_text_image")


class ToyTextureExtractor:
    """Four-level feature pyramid over progressively pooled color + gradient maps."""

    def __init__(self, channels=(8, 8, 8, 8), seed=7):
        if len(channels) != 4:
            raise BackboneError(f"texture extractor needs 4 channel counts, got {channels}")
        self.channels = tuple(channels)
        self.texture_dim = self.channels[-1]
        self._proj = [
            _seeded_matrix(f"toytex:{seed}:level{i}", c, 9, 1.0 / 3.0)
            for i, c in enumerate(self.channels)
        ]

    def features(self, img: Image) -> FeaturePyramid:
        img = validate_image(img) if not img.requires_grad else img
        x = img.permute(2, 0, 1).unsqueeze(0)  # (1, 3, H, W)
        levels = []
        for i in range(4):
            pooled = F.avg_pool2d(x, 2**i) if i > 0 else x
            dx = F.pad(pooled[..., :, 1:] - pooled[..., :, :-1], (0, 1, 0, 0))
            dy = F.pad(pooled[..., 1:, :] - pooled[..., :-1, :], (0, 0, 0, 1))
            stacked = torch.cat([pooled, dx, dy], dim=1)[0]  # (9, h, w)
            flat = stacked.reshape(9, -1)
            levels.append(torch.tanh(self._proj[i].to(flat.dtype) @ flat))
        return FeaturePyramid(tuple(levels))


# Horizontal band layout (fractions of image height). Frozen: at 64 px this
# puts upper cloth at rows [16, 36) and lower cloth at rows [36, 56).
_BANDS = {
    "face": (1 / 16, 1 / 4),
    "upper_cloth": (1 / 4, 9 / 16),
    "lower_cloth": (9 / 16, 7 / 8),
    "skin": (7 / 8, 15 / 16),
}

# Anchor colors for the four garment categories the evaluator scores.
CATEGORY_COLORS = {
    "skirt": (0.80, 0.15, 0.15),
    "pants": (0.15, 0.25, 0.80),
    "dress": (0.15, 0.70, 0.25),
    "rompers": (0.85, 0.75, 0.20),
}


class ToyParser:
    """Fixed horizontal-band segmentation, independent of image content."""

    @staticmethod
    def _band(height: int, width: int, lo_frac: float, hi_frac: float) -> torch.Tensor:
        mask = torch.zeros(height, width)
        mask[int(lo_frac * height) : int(hi_frac * height)] = 1.0
        return mask

    def parse(self, img: Image) -> ParsingMask:
        img = torch.as_tensor(img)
        h, w = int(img.shape[0]), int(img.shape[1])
        bands = {name: self._band(h, w, *fr) for name, fr in _BANDS.items()}
        cloth = torch.clamp(bands["upper_cloth"] + bands["lower_cloth"], max=1.0)
        return ParsingMask(
            upper_cloth=bands["upper_cloth"],
            lower_cloth=bands["lower_cloth"],
            skin=bands["skin"],
            face=bands["face"],
            background_noncloth=1.0 - cloth,
        )

    def category_masks(self, img: Image) -> dict[str, torch.Tensor]:
        """Nearest-anchor-color classification of cloth pixels into garment categories."""
        img = validate_image(img)
        cloth = self.parse(img).cloth
        anchors = torch.tensor(list(CATEGORY_COLORS.values()))  # (4, 3)
        dist = ((img.unsqueeze(2) - anchors.reshape(1, 1, -1, 3)) ** 2).sum(-1)  # (H, W, 4)
        nearest = dist.argmin(dim=-1)
        return {
            name: ((nearest == i).to(torch.float32) * cloth)
            for i, name in enumerate(CATEGORY_COLORS)
        }


class ToyIdentityEmbedder:
    """Identity vector computed from the face band only.

    Pixels outside the face rows never influence the embedding, so cloth
    edits that leave the face untouched have exactly zero identity loss.
    """

    def __init__(self, dim=16, image_size=64, seed=7):
        self.dim = dim
        self.image_size = image_size
        lo, hi = _BANDS["face"]
        self._rows = (int(lo * image_size), int(hi * image_size))
        n = (self._rows[1] - self._rows[0]) * image_size * 3
        self._proj = _seeded_matrix(f"toyid:{seed}:proj", dim, n, 1.0 / math.sqrt(n))
        self._bias = _seeded_matrix(f"toyid:{seed}:bias", 1, dim, 0.1).reshape(-1)

    def embed(self, img: Image) -> Embedding:
        return Embedding(self.embed_tensor(img), "identity")

    def embed_tensor(self, img: Image) -> torch.Tensor:
        if img.shape[0] != self.image_size or img.shape[1] != self.image_size:
            raise ValueError(
                f"identity embedder expects {self.image_size} px images, got {tuple(img.shape[:2])}"
            )
        face = img[self._rows[0] : self._rows[1]]
        flat = face.reshape(-1)
        return self._proj.to(flat.dtype) @ flat + self._bias.to(flat.dtype)


class ToyPerceptual:
    """Mean squared difference of a fixed seeded random-projection feature."""

    def __init__(self, feature_dim=128, image_size=64, seed=7):
        self.feature_dim = feature_dim
        self.image_size = image_size
        n = image_size * image_size * 3
        self._proj = _seeded_matrix(f"toylpips:{seed}", feature_dim, n, 1.0 / math.sqrt(n))

    def features(self, img: Image) -> torch.Tensor:
        flat = torch.as_tensor(img)
        if flat.dtype != torch.float64:
            flat = flat.to(torch.float32)
        flat = flat.reshape(-1)
        return self._proj.to(flat.dtype) @ flat

    def distance(self, a: Image, b: Image) -> torch.Tensor:
        if tuple(a.shape) != tuple(b.shape):
            raise ValueError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        return ((self.features(a) - self.features(b)) ** 2).mean()


# ---------------------------------------------------------------------------
# Configuration and loading


@dataclass(frozen=True)
class BackboneSpec:
    """How to obtain one backbone: a seeded toy or an external checkpoint."""

    kind: str = "toy"  # toy | external
    seed: int = 7
    path: str | None = None
    loader: str | None = None  # "package.module:factory" for external checkpoints


@dataclass(frozen=True)
class BackbonesConfig:
    latent_layers: int = 8
    latent_dim: int = 32
    image_size: int = 64
    joint_text_dim: int = 32
    joint_image_dim: int = 32
    identity_dim: int = 16
    texture_channels: tuple[int, ...] = (8, 8, 8, 8)
    perceptual_dim: int = 128
    generator: BackboneSpec = field(default_factory=BackboneSpec)
    inverter: BackboneSpec = field(default_factory=BackboneSpec)
    joint_embedder: BackboneSpec = field(default_factory=BackboneSpec)
    texture_extractor: BackboneSpec = field(default_factory=BackboneSpec)
    identity_embedder: BackboneSpec = field(default_factory=BackboneSpec)
    parser: BackboneSpec = field(default_factory=BackboneSpec)
    perceptual: BackboneSpec = field(default_factory=BackboneSpec)

    def with_seed(self, seed: int) -> "BackbonesConfig":
        """Same configuration with every toy backbone reseeded."""
        updates = {}
        for name in ("generator", "inverter", "joint_embedder", "texture_extractor",
                     "identity_embedder", "parser", "perceptual"):
            spec = getattr(self, name)
            if spec.kind == "toy":
                updates[name] = replace(spec, seed=seed)
        return replace(self, **updates)


@dataclass
class BackboneSet:
    generator: Generator
    inverter: Inverter
    joint_embedder: JointEmbedder
    texture_extractor: TextureExtractor
    identity_embedder: IdentityEmbedder
    parser: Parser
    perceptual: Perceptual


def _load_external(role: str, spec: BackboneSpec):
    if not spec.loader:
        raise BackboneError(f"{role}: external backbone needs a loader ('module:factory')")
    if not spec.path:
        raise BackboneError(f"{role}: external backbone needs a checkpoint path")
    from pathlib import Path

    if not Path(spec.path).exists():
        raise BackboneError(f"{role}: checkpoint not found: {spec.path}")
    mod_name, _, attr = spec.loader.partition(":")
    if not attr:
        raise BackboneError(f"{role}: loader {spec.loader!r} is not 'module:factory'")
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise BackboneError(f"{role}: cannot import loader {spec.loader!r}: {exc}") from exc
    return factory(spec.path)


def load_backbones(cfg: BackbonesConfig) -> BackboneSet:
    """Build all seven handles; toy variants are fully determined by their seeds."""

    def build(role: str, make_toy: Callable):
        spec = getattr(cfg, role)
        if spec.kind == "toy":
            return make_toy(spec)
        if spec.kind == "external":
            return _load_external(role, spec)
        raise BackboneError(f"{role}: unknown backbone kind {spec.kind!r}")

    generator = build(
        "generator",
        lambda s: ToyGenerator(cfg.latent_layers, cfg.latent_dim, cfg.image_size, s.seed),
    )

    def make_toy_inverter(spec):
        if not isinstance(generator, ToyGenerator):
            raise BackboneError("toy inverter requires the toy generator; it derives its maps from it")
        return ToyInverter(generator)

    inverter = build("inverter", make_toy_inverter)
    joint = build(
        "joint_embedder",
        lambda s: ToyJointEmbedder(cfg.joint_text_dim, cfg.joint_image_dim, cfg.image_size, s.seed),
    )
    texture = build(
        "texture_extractor", lambda s: ToyTextureExtractor(cfg.texture_channels, s.seed)
    )
    identity = build(
        "identity_embedder",
        lambda s: ToyIdentityEmbedder(cfg.identity_dim, cfg.image_size, s.seed),
    )
    parser = build("parser", lambda s: ToyParser())
    perceptual = build(
        "perceptual", lambda s: ToyPerceptual(cfg.perceptual_dim, cfg.image_size, s.seed)
    )

    probe_text = joint.embed_text("probe").dim
    probe_image = joint.embed_image(torch.full((cfg.image_size, cfg.image_size, 3), 0.5)).dim
    if probe_text != probe_image:
        raise BackboneError(
            f"joint embedder text dim {probe_text} != image dim {probe_image}; "
            "the calibration arithmetic needs one shared space"
        )
    return BackboneSet(generator, inverter, joint, texture, identity, parser, perceptual)
