"""Metric suite: distribution distance of edited images, parsing-based type
accuracy over the four garment categories, and mean perceptual distance.

The feature extractor behind the distribution distance is pluggable; desk
runs use the toy perceptual features. Absolute values are therefore only
comparable within one backbone configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbones import CATEGORY_COLORS, BackboneSet, Image
from .latent import apply_offsets
from .mapper import FashionMapper, compute_offsets, embed_condition, load_mapper
from .training import (DatasetIndex, _ImageCache, _record_latent, lower_tag_category,
                       sample_condition)


class EvaluationError(ValueError):
    """Metric called outside its domain (empty input, unknown category)."""


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Matrix square root of a symmetric PSD matrix via eigendecomposition."""
    sym = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _features_matrix(features) -> np.ndarray:
    if isinstance(features, torch.Tensor):
        arr = features.detach().numpy()
    else:
        arr = np.asarray([
            f.detach().numpy() if isinstance(f, torch.Tensor) else np.asarray(f)
            for f in features
        ])
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise EvaluationError(f"feature set must be 2-D (samples x dims), got {arr.shape}")
    if arr.shape[0] < 2:
        raise EvaluationError(f"need at least 2 samples per feature set, got {arr.shape[0]}")
    return arr


def fid(features_a, features_b) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the cross
    square root computed on the symmetrized product and ridge-regularized
    covariances; clamped at zero.
    """
    a, b = _features_matrix(features_a), _features_matrix(features_b)
    if a.shape[1] != b.shape[1]:
        raise EvaluationError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ridge = 1e-6 * np.eye(a.shape[1])
    cov_a = np.atleast_2d(np.cov(a, rowvar=False)) + ridge
    cov_b = np.atleast_2d(np.cov(b, rowvar=False)) + ridge
    sqrt_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(sqrt_a @ cov_b @ sqrt_a)
    value = (
        float(((mu_a - mu_b) ** 2).sum())
        + float(np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    )
    return max(value, 0.0)


def type_accuracy(edits, parser, threshold: float = 0.005):
    """Fraction of edits whose parsed garment map shows the target category.

    Success means the target category's pixel count reaches `threshold` of
    the image area. Returns (overall, per-category breakdown).
    """
    edits = list(edits)
    if not edits:
        raise EvaluationError("type accuracy needs at least one edit")
    per: dict[str, dict[str, float]] = {}
    successes = 0
    for img, target in edits:
        if target not in CATEGORY_COLORS:
            raise EvaluationError(
                f"unknown category {target!r}; expected one of {sorted(CATEGORY_COLORS)}"
            )
        img = torch.as_tensor(img)
        masks = parser.category_masks(img)
        area = img.shape[0] * img.shape[1]
        hit = float(masks[target].sum()) >= threshold * area
        successes += int(hit)
        slot = per.setdefault(target, {"attempts": 0, "successes": 0})
        slot["attempts"] += 1
        slot["successes"] += int(hit)
    for slot in per.values():
        slot["accuracy"] = slot["successes"] / slot["attempts"]
    return successes / len(edits), per


def lpips_mean(pairs, perceptual) -> float:
    """Mean perceptual distance over (image, image) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise EvaluationError("perceptual mean needs at least one pair")
    return float(np.mean([float(perceptual.distance(a, b)) for a, b in pairs]))


@dataclass(frozen=True)
class EvalConfig:
    num_samples: int = 12
    seed: int = 0
    category_pixel_threshold: float = 0.005
    crop_size: int = 16

    def __post_init__(self):
        if self.num_samples < 2:
            raise ValueError(f"need at least 2 evaluation samples, got {self.num_samples}")
        if not (0 <= self.category_pixel_threshold <= 1):
            raise ValueError("category_pixel_threshold must be a fraction of the image area")


@dataclass
class EvalReport:
    fid: float
    accuracy: float
    lpips_mean: float
    per_category: dict[str, dict[str, float]]
    sample_count: int
    samples: list[dict] = field(default_factory=list, repr=False)

    def serialize(self) -> str:
        lines = [
            f"fid: {self.fid!r}",
            f"accuracy: {self.accuracy!r}",
            f"lpips_mean: {self.lpips_mean!r}",
            f"samples: {self.sample_count}",
            "per-category accuracy:",
        ]
        for cat in sorted(self.per_category):
            slot = self.per_category[cat]
            lines.append(
                f"  {cat}: {slot['successes']:.0f}/{slot['attempts']:.0f}"
                f" ({slot['accuracy']:.4f})"
            )
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        lines = ["sample,target_category,type_success,lpips"]
        for row in self.samples:
            lines.append(
                f"{row['sample']},{row['target_category']},"
                f"{int(row['type_success'])},{row['lpips']!r}"
            )
        return "\n".join(lines) + "\n"


def evaluate(mapper, index: DatasetIndex, backbones: BackboneSet,
             cfg: EvalConfig) -> EvalReport:
    """Edit the test split with sampled conditions and score all three metrics.

    The reference set for the distribution distance is drawn per sample from
    dataset images whose lower tag names the same garment category as the
    sampled target.
    """
    if not isinstance(mapper, FashionMapper):
        mapper = load_mapper(Path(mapper))
    records = index.test_records()
    if not records:
        raise EvaluationError("test split is empty")

    by_category: dict[str, list[int]] = {}
    for i, record in enumerate(index.records):
        try:
            by_category.setdefault(lower_tag_category(record.lower_tag), []).append(i)
        except ValueError:
            continue

    cache = _ImageCache()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    edited_features, reference_features = [], []
    accuracy_inputs, lpips_pairs, samples = [], [], []
    with torch.no_grad():
        for k in range(cfg.num_samples):
            record = records[k % len(records)]
            w = _record_latent(record, backbones, cache)
            cond = sample_condition(index, rng, backbones, cfg.crop_size, cache)
            offsets = compute_offsets(w, embed_condition(cond, backbones), mapper)
            i_e = backbones.generator.generate(apply_offsets(w, offsets))
            original = cache.get(record)
            target = lower_tag_category(cond.text_lower)

            edited_features.append(backbones.perceptual.features(i_e))
            pool = by_category.get(target) or list(range(len(index.records)))
            ref = index.records[pool[int(rng.integers(len(pool)))]]
            reference_features.append(backbones.perceptual.features(cache.get(ref)))
            accuracy_inputs.append((i_e, target))
            lpips_pairs.append((i_e, original))
            samples.append({"sample": k, "target_category": target})

    accuracy, per_category = type_accuracy(
        accuracy_inputs, backbones.parser, cfg.category_pixel_threshold
    )
    per_pair = [float(backbones.perceptual.distance(a, b)) for a, b in lpips_pairs]
    for row, (img, target), dist in zip(samples, accuracy_inputs, per_pair):
        masks = backbones.parser.category_masks(img)
        area = img.shape[0] * img.shape[1]
        row["type_success"] = float(masks[target].sum()) >= cfg.category_pixel_threshold * area
        row["lpips"] = dist
    return EvalReport(
        fid=fid(edited_features, reference_features),
        accuracy=accuracy,
        lpips_mean=float(np.mean(per_pair)),
        per_category=per_category,
        sample_count=cfg.num_samples,
        samples=samples,
    )
