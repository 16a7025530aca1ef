"""Mapper training: dataset ingestion, condition sampling, the loop, checkpoints.

A dataset is a directory with images and a tab-separated manifest of cloth
tags. Ingestion aligns each image around its parsed body midpoint, drops
records with empty cloth parses or implausible alignment shifts, and splits
deterministically. Training optimizes only the two mappers; every backbone
stays frozen. Each step's sampling is derived from (seed, step) alone, so a
resumed run reproduces the uninterrupted one bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .backbones import CATEGORY_COLORS, BackboneSet, BackbonesConfig, Image, load_backbones
from .container import load_tensors, save_tensors
from .imaging import load_image_file, save_image_file
from .latent import GroupBounds, LatentCode, load_latent, save_latent, apply_offsets
from .losses import LossReport, LossWeights, sample_crop_window, total_loss, TERM_NAMES
from .mapper import (EditCondition, FashionMapper, compute_offsets, embed_condition,
                     restore_mapper_state)
from .optim import Adam

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"

# Paper-scale datasets split 11,265 train / 1,136 test; the same ratio is
# applied to any record count.
TRAIN_FRACTION = 11265 / (11265 + 1136)

# Alignment shifts beyond a quarter of the image are treated as failures.
MAX_ALIGN_SHIFT_FRACTION = 0.25

_UPPER_TAGS = (
    "sleeveless top", "polo shirt", "t shirt", "sweater", "hoodie",
    "tank top", "blouse", "denim jacket", "cardigan", "long sleeve shirt",
)
_LOWER_TAGS = (
    "short skirt", "pants", "dress", "rompers", "long skirt",
    "shorts", "jeans", "pleated skirt", "wide leg pants", "denim skirt",
)

# 20 (upper, lower) attribute combinations: each upper tag appears twice,
# paired with two different lower tags.
VOCABULARY: tuple[tuple[str, str], ...] = tuple(
    (_UPPER_TAGS[i], _LOWER_TAGS[(i + offset) % len(_LOWER_TAGS)])
    for offset in (0, 3)
    for i in range(len(_UPPER_TAGS))
)

_CATEGORY_WORDS = {
    "skirt": "skirt",
    "dress": "dress",
    "rompers": "rompers",
    "pants": "pants",
    "jeans": "pants",
    "shorts": "pants",
    "leggings": "pants",
}


class DatasetError(ValueError):
    """Unreadable dataset root or malformed manifest."""


class TrainingError(RuntimeError):
    """Training cannot proceed (non-finite loss, bad checkpoint, sampling failure)."""


def lower_tag_category(tag: str) -> str:
    """Garment category ('skirt' | 'pants' | 'dress' | 'rompers') named by a lower tag."""
    for word in tag.lower().split():
        if word in _CATEGORY_WORDS:
            return _CATEGORY_WORDS[word]
    raise ValueError(f"lower tag {tag!r} names no known garment category")


def build_prompt(upper_attr: str, lower_attr: str) -> str:
    """Inverse of split_text: '<upper>, <lower>'."""
    upper, lower = upper_attr.strip(), lower_attr.strip()
    if not upper or not lower:
        raise ValueError("both attributes are required to build a prompt")
    if "," in upper or "," in lower:
        raise ValueError("attributes may not contain commas")
    return f"{upper}, {lower}"


@dataclass
class DatasetRecord:
    path: Path
    upper_tag: str
    lower_tag: str
    shift: tuple[int, int] = (0, 0)
    latent_path: Path | None = None


@dataclass
class DatasetIndex:
    root: Path
    records: list[DatasetRecord]
    train: list[int]
    test: list[int]
    seed: int

    def train_records(self) -> list[DatasetRecord]:
        return [self.records[i] for i in self.train]

    def test_records(self) -> list[DatasetRecord]:
        return [self.records[i] for i in self.test]


def _translate_clamped(img: torch.Tensor, shift: tuple[int, int]) -> torch.Tensor:
    """Shift content by (-dy, -dx) with edge replication, keeping the size."""
    dy, dx = shift
    if dy == 0 and dx == 0:
        return img
    h, w = img.shape[0], img.shape[1]
    rows = torch.clamp(torch.arange(h) + dy, 0, h - 1)
    cols = torch.clamp(torch.arange(w) + dx, 0, w - 1)
    return img[rows][:, cols]


def load_record_image(record: DatasetRecord) -> Image:
    """The record's image with its alignment shift applied."""
    return _translate_clamped(load_image_file(record.path), record.shift)


def _body_shift(img: Image, parsing) -> tuple[int, int]:
    """Integer shift that recenters the parsed body midpoint."""
    body = torch.clamp(parsing.cloth + parsing.face + parsing.skin, max=1.0)
    total = float(body.sum())
    if total == 0.0:
        return (0, 0)
    h, w = body.shape
    ys = torch.arange(h, dtype=torch.float32)
    xs = torch.arange(w, dtype=torch.float32)
    cy = float((body.sum(dim=1) * ys).sum() / total)
    cx = float((body.sum(dim=0) * xs).sum() / total)
    return (round(cy - (h - 1) / 2), round(cx - (w - 1) / 2))


def synthesize_dataset(root, num_images: int, backbones: BackboneSet | None = None,
                       seed: int = 0, tint: float = 0.55, noise: float = 0.04) -> Path:
    """Write a small portrait dataset with a manifest for desk runs and tests.

    Each image is a generator render of a random latent whose cloth bands are
    tinted toward its manifest tags (lower band: the tag's category anchor
    color) with light noise on the cloth rows, so images sit slightly off the
    generator's exact range and carry category signal for the parser.
    """
    if num_images < 1:
        raise ValueError(f"num_images must be at least 1, got {num_images}")
    backbones = backbones or load_backbones(BackbonesConfig())
    gen = backbones.generator
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    upper_tints = [
        tuple(0.25 + 0.5 * rng.random(3)) for _ in range(len(_UPPER_TAGS))
    ]
    lines = []
    for i in range(num_images):
        upper_tag, lower_tag = VOCABULARY[i % len(VOCABULARY)]
        layers = torch.as_tensor(
            rng.normal(0.0, 0.3, size=(gen.num_layers, gen.dim)), dtype=torch.float32
        )
        img = gen.generate(LatentCode(layers, gen.bounds)).clone()
        parsing = backbones.parser.parse(img)
        for mask, color in (
            (parsing.upper_cloth, upper_tints[_UPPER_TAGS.index(upper_tag)]),
            (parsing.lower_cloth, CATEGORY_COLORS[lower_tag_category(lower_tag)]),
        ):
            m = mask.unsqueeze(-1)
            img = img * (1 - tint * m) + torch.tensor(color) * tint * m
        jitter = torch.as_tensor(
            rng.normal(0.0, noise, size=tuple(img.shape)), dtype=torch.float32
        )
        img = (img + jitter * parsing.cloth.unsqueeze(-1)).clamp(0.0, 1.0)
        rel = f"images/{i:04d}.png"
        save_image_file(img, root / rel)
        lines.append(f"{rel}\t{upper_tag}\t{lower_tag}")
    (root / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root


def ingest_dataset(root, backbones: BackboneSet, align: bool = True,
                   seed: int = 0) -> DatasetIndex:
    """Read the manifest, align and filter records, and split train/test."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a readable directory")
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise DatasetError(f"missing manifest {manifest}")

    records: list[DatasetRecord] = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(
                f"{manifest}:{lineno}: expected 'path<TAB>upper<TAB>lower', got {line!r}"
            )
        rel, upper, lower = (p.strip() for p in parts)
        if not rel or not upper or not lower:
            raise DatasetError(f"{manifest}:{lineno}: empty field in {line!r}")
        path = root / rel
        if not path.is_file():
            raise DatasetError(f"{manifest}:{lineno}: image not found: {path}")
        records.append(DatasetRecord(path=path, upper_tag=upper, lower_tag=lower))
    if not records:
        raise DatasetError(f"{manifest} lists no records")

    kept: list[DatasetRecord] = []
    for record in records:
        img = load_image_file(record.path)
        parsing = backbones.parser.parse(img)
        if float(parsing.cloth.sum()) == 0.0:
            log.info("dropping %s: empty cloth parse", record.path)
            continue
        if align:
            dy, dx = _body_shift(img, parsing)
            h, w = img.shape[0], img.shape[1]
            if abs(dy) > MAX_ALIGN_SHIFT_FRACTION * h or abs(dx) > MAX_ALIGN_SHIFT_FRACTION * w:
                log.info("dropping %s: alignment shift (%d, %d) too large", record.path, dy, dx)
                continue
            record = replace(record, shift=(dy, dx))
        kept.append(record)
    if not kept:
        raise DatasetError(f"no usable records under {root}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(kept))
    n_train = int(round(len(kept) * TRAIN_FRACTION))
    return DatasetIndex(
        root=root,
        records=kept,
        train=sorted(int(i) for i in perm[:n_train]),
        test=sorted(int(i) for i in perm[n_train:]),
        seed=seed,
    )


class _ImageCache:
    """Memoized aligned-image loads keyed by record identity."""

    def __init__(self):
        self._images: dict[Path, Image] = {}

    def get(self, record: DatasetRecord) -> Image:
        if record.path not in self._images:
            self._images[record.path] = load_record_image(record)
        return self._images[record.path]


def precompute_latents(index: DatasetIndex, backbones: BackboneSet, cache_dir,
                       cache: _ImageCache | None = None) -> None:
    """Invert every record once and store the latents as files."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache = cache or _ImageCache()
    for i, record in enumerate(index.records):
        if record.latent_path is not None:
            continue
        out = cache_dir / f"{i:05d}.wplatent"
        if not out.exists():
            save_latent(backbones.inverter.invert(cache.get(record)), out)
        record.latent_path = out


def _record_latent(record: DatasetRecord, backbones: BackboneSet,
                   cache: _ImageCache) -> LatentCode:
    if record.latent_path is not None:
        return load_latent(record.latent_path, bounds=backbones.generator.bounds)
    return backbones.inverter.invert(cache.get(record))


def sample_condition(index: DatasetIndex, rng: np.random.Generator,
                     backbones: BackboneSet, crop_size: int = 16,
                     cache: _ImageCache | None = None,
                     retry_budget: int = 20) -> EditCondition:
    """A full edit condition: a vocabulary type target plus two donor texture patches."""
    if not index.records:
        raise DatasetError("cannot sample conditions from an empty index")
    cache = cache or _ImageCache()
    upper_text, lower_text = VOCABULARY[int(rng.integers(len(VOCABULARY)))]
    patches = {}
    for side in ("upper", "lower"):
        patch = None
        for _ in range(retry_budget):
            donor = index.records[int(rng.integers(len(index.records)))]
            img = cache.get(donor)
            mask = backbones.parser.parse(img).region(side)
            try:
                top, left = sample_crop_window(mask, crop_size, rng)
            except ValueError:
                continue
            patch = img[top : top + crop_size, left : left + crop_size, :]
            break
        if patch is None:
            raise TrainingError(
                f"no donor image admits a {crop_size}x{crop_size} {side} patch "
                f"after {retry_budget} attempts"
            )
        patches[side] = patch
    return EditCondition(
        text_upper=upper_text,
        text_lower=lower_text,
        patch_upper=patches["upper"],
        patch_lower=patches["lower"],
    )


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    batch_size: int = 4
    learning_rate: float = 5e-4
    weights: LossWeights = field(default_factory=LossWeights)
    crop_size: int = 16
    seed: int = 0
    checkpoint_every: int = 100
    log_every: int = 10
    mapper_depth: int = 4
    out_dir: str = "runs/toy"
    backbones: BackbonesConfig = field(default_factory=BackbonesConfig)
    bounds: GroupBounds | None = None

    def __post_init__(self):
        for name in ("steps", "batch_size", "crop_size", "checkpoint_every",
                     "log_every", "mapper_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def new_mapper(cfg: TrainConfig, backbones: BackboneSet) -> FashionMapper:
    """A freshly initialized mapper sized to the loaded backbones."""
    joint_dim = backbones.joint_embedder.embed_text("probe").dim
    mapper = FashionMapper(
        joint_dim=joint_dim,
        texture_dim=backbones.texture_extractor.texture_dim,
        width=backbones.generator.dim,
        depth=cfg.mapper_depth,
    )
    return mapper.init_weights(cfg.seed)


def _step_rng(seed: int, step: int) -> np.random.Generator:
    """Fresh stream per step, a function of (seed, step) only, so resume is exact."""
    return np.random.default_rng(np.random.SeedSequence([seed, step]))


def _sample_batch(index: DatasetIndex, rng: np.random.Generator,
                  backbones: BackboneSet, cfg: TrainConfig, cache: _ImageCache):
    train = index.train_records()
    batch = []
    for _ in range(cfg.batch_size):
        record = train[int(rng.integers(len(train)))]
        w = _record_latent(record, backbones, cache)
        cond = sample_condition(index, rng, backbones, cfg.crop_size, cache)
        batch.append((w, (record.upper_tag, record.lower_tag), cond))
    return batch


def train_step(batch, mapper: FashionMapper, backbones: BackboneSet,
               cfg: TrainConfig, opt: Adam, rng: np.random.Generator) -> LossReport:
    """One gradient step on the mapper over a batch; backbones stay frozen."""
    opt.zero_grad()
    total = None
    reports = []
    for w, source_tags, cond in batch:
        emb = embed_condition(cond, backbones)
        offsets = compute_offsets(w, emb, mapper)
        w_edit = apply_offsets(w, offsets)
        i_e = backbones.generator.generate(w_edit)
        with torch.no_grad():
            i_i = backbones.generator.generate(w)
        report = total_loss(i_e, i_i, offsets, cond, source_tags, backbones,
                            cfg.weights, rng, cfg.crop_size)
        total = report.tensor if total is None else total + report.tensor
        reports.append(report)
    mean = total / len(batch)
    if not torch.isfinite(mean):
        raise TrainingError(f"non-finite loss {float(mean.detach())}; aborting")
    mean.backward()
    opt.step()
    n = len(reports)
    raw = {k: sum(r.raw[k] for r in reports) / n for k in TERM_NAMES}
    weighted = {k: sum(r.weighted[k] for r in reports) / n for k in TERM_NAMES}
    return LossReport(raw=raw, weighted=weighted, total=float(mean.detach()))


def save_checkpoint(path, mapper: FashionMapper, opt: Adam, step: int,
                    cfg: TrainConfig) -> None:
    from .confutil import to_plain

    tensors = dict(mapper.state_dict())
    tensors.update(opt.state_tensors("opt."))
    meta = {
        "kind": "fashiontex-mapper",
        "arch": mapper.arch(),
        "step": step,
        "train_config": to_plain(cfg),
    }
    save_tensors(path, tensors, meta)


def load_checkpoint(path) -> tuple[FashionMapper, dict[str, torch.Tensor], int, TrainConfig]:
    from .confutil import from_plain

    tensors, meta = load_tensors(path)
    if meta.get("kind") != "fashiontex-mapper":
        raise TrainingError(f"{path}: not a mapper checkpoint (kind={meta.get('kind')!r})")
    mapper = FashionMapper(**meta["arch"])
    restore_mapper_state(mapper, {k: v for k, v in tensors.items() if not k.startswith("opt.")})
    opt_state = {k: v for k, v in tensors.items() if k.startswith("opt.")}
    cfg = from_plain(TrainConfig, meta["train_config"], path="train_config")
    return mapper, opt_state, int(meta["step"]), cfg


@dataclass
class TrainResult:
    mapper: FashionMapper
    reports: list[LossReport]
    checkpoint_path: Path | None
    log_path: Path | None


def train(cfg: TrainConfig, index: DatasetIndex, backbones: BackboneSet | None = None,
          resume=None) -> TrainResult:
    """Run (or resume) the training loop, writing checkpoints and the line log."""
    backbones = backbones or load_backbones(cfg.backbones)
    if not index.train:
        raise TrainingError("training split is empty")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    start_step = 0
    if resume is not None:
        mapper, opt_state, start_step, saved_cfg = load_checkpoint(resume)
        if saved_cfg.seed != cfg.seed or saved_cfg.batch_size != cfg.batch_size:
            raise TrainingError(
                "resume config mismatch: seed/batch_size differ from the checkpoint"
            )
        opt = Adam(dict(mapper.named_parameters()), lr=cfg.learning_rate)
        opt.load_state_tensors(opt_state, "opt.")
    else:
        mapper = new_mapper(cfg, backbones)
        opt = Adam(dict(mapper.named_parameters()), lr=cfg.learning_rate)

    cache = _ImageCache()
    precompute_latents(index, backbones, out_dir / "latents", cache)

    log_path = out_dir / "train.log"
    reports: list[LossReport] = []
    checkpoint_path: Path | None = None
    with open(log_path, "a", encoding="utf-8") as log_file:
        for step in range(start_step, cfg.steps):
            rng = _step_rng(cfg.seed, step)
            batch = _sample_batch(index, rng, backbones, cfg, cache)
            report = train_step(batch, mapper, backbones, cfg, opt, rng)
            reports.append(report)
            log_file.write(report.log_line(step) + "\n")
            if (step + 1) % cfg.log_every == 0 or step + 1 == cfg.steps:
                log.info("%s", report.log_line(step))
            if (step + 1) % cfg.checkpoint_every == 0 or step + 1 == cfg.steps:
                checkpoint_path = out_dir / f"mapper-step{step + 1:06d}.ckpt"
                save_checkpoint(checkpoint_path, mapper, opt, step + 1, cfg)
    return TrainResult(mapper=mapper, reports=reports,
                       checkpoint_path=checkpoint_path, log_path=log_path)
