"""The trainable fashion editing module.

Two mappers turn conditions into latent offsets: the type mapper reads text
embeddings and writes medium-group offsets (garment type and shape), the
texture mapper reads patch embeddings and writes fine-group offsets
(pattern and color). Each mapper holds separate upper-body and lower-body
branches whose outputs are summed, and each branch is a stack of modulation
blocks: normalize the latent rows, then scale and shift them with
condition-derived gamma and beta.

Disentanglement is structural, not learned: text can only move the medium
group, patches can only move the fine group, and nothing touches coarse.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import BackboneSet, Embedding, Image, validate_image
from .container import load_tensors, save_tensors
from .latent import LatentCode, LatentOffset, apply_offsets

MIN_PATCH_SIDE = 16


class PromptFormatError(ValueError):
    """Prompt does not follow the '<upper phrase>, <lower phrase>' form."""


class ConditionError(ValueError):
    """Invalid edit condition (nothing to do, or malformed patch)."""


def split_text(prompt: str) -> tuple[str, str]:
    """Split "<upper phrase>, <lower phrase>" (an optional "and" may follow the comma)."""
    if prompt.count(",") == 0:
        raise PromptFormatError(f"prompt {prompt!r} needs one comma separating upper and lower")
    if prompt.count(",") > 1:
        raise PromptFormatError(f"prompt {prompt!r} has more than one comma")
    upper, lower = (part.strip() for part in prompt.split(","))
    if lower == "and":
        lower = ""
    elif lower.startswith("and "):
        lower = lower[4:].strip()
    if not upper or not lower:
        raise PromptFormatError(f"prompt {prompt!r} leaves an empty side; both phrases are required")
    return upper, lower


@dataclass
class EditCondition:
    """Up to four conditions: per-part target text and per-part texture patches."""

    text_upper: str | None = None
    text_lower: str | None = None
    patch_upper: Image | None = None
    patch_lower: Image | None = None

    def __post_init__(self):
        if not any((self.text_upper, self.text_lower,
                    self.patch_upper is not None, self.patch_lower is not None)):
            raise ConditionError("at least one condition (text or patch) is required")
        for name in ("patch_upper", "patch_lower"):
            patch = getattr(self, name)
            if patch is None:
                continue
            patch = validate_image(patch)
            if patch.shape[0] != patch.shape[1]:
                raise ConditionError(f"{name} must be square, got {tuple(patch.shape[:2])}")
            if patch.shape[0] < MIN_PATCH_SIDE:
                raise ConditionError(
                    f"{name} side {patch.shape[0]} px is below the {MIN_PATCH_SIDE} px minimum"
                )
            setattr(self, name, patch)

    @property
    def has_text(self) -> bool:
        return bool(self.text_upper or self.text_lower)

    @property
    def has_patch(self) -> bool:
        return self.patch_upper is not None or self.patch_lower is not None


def modulate_rows(w_part: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor,
                  eps: float) -> torch.Tensor:
    """Per-row offset: beta + gamma * (row - mean(row)) / (std(row) + eps).

    Statistics are taken over each layer's channels (population std), so a
    constant row contributes only beta.
    """
    mu = w_part.mean(dim=1, keepdim=True)
    sigma = w_part.std(dim=1, unbiased=False, keepdim=True)
    return beta + gamma * (w_part - mu) / (sigma + eps)


class ModulationBlock(nn.Module):
    """Two condition-driven affine maps producing gamma and beta for one modulation."""

    def __init__(self, cond_dim: int, width: int, eps: float = 1e-8):
        super().__init__()
        self.to_gamma = nn.Linear(cond_dim, width)
        self.to_beta = nn.Linear(cond_dim, width)
        self.eps = eps

    def forward(self, w_part: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if cond.shape[-1] != self.to_gamma.in_features:
            raise ValueError(
                f"condition dim {cond.shape[-1]} != block input dim {self.to_gamma.in_features}"
            )
        if w_part.shape[-1] != self.to_gamma.out_features:
            raise ValueError(
                f"latent width {w_part.shape[-1]} != block output dim {self.to_gamma.out_features}"
            )
        cond = cond.to(self.to_gamma.weight.dtype)
        return modulate_rows(w_part, self.to_gamma(cond), self.to_beta(cond), self.eps)


def modulate(w_part: torch.Tensor, cond: Embedding | torch.Tensor,
             block: ModulationBlock) -> torch.Tensor:
    """Apply one modulation block to a layer group."""
    vec = cond.values if isinstance(cond, Embedding) else cond
    return block(w_part, vec)


class MapperStack(nn.Module):
    """Sequential modulation blocks; the condition is re-injected at every block."""

    def __init__(self, cond_dim: int, width: int, depth: int = 4, eps: float = 1e-8):
        super().__init__()
        self.blocks = nn.ModuleList(ModulationBlock(cond_dim, width, eps) for _ in range(depth))

    def forward(self, w_part: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = w_part
        for block in self.blocks[:-1]:
            h = F.leaky_relu(block(h, cond), negative_slope=0.2)
        return self.blocks[-1](h, cond)


class PartPair(nn.Module):
    """Independent upper-body and lower-body branches of one mapper."""

    def __init__(self, cond_dim: int, width: int, depth: int, eps: float):
        super().__init__()
        self.upper = MapperStack(cond_dim, width, depth, eps)
        self.lower = MapperStack(cond_dim, width, depth, eps)


class FashionMapper(nn.Module):
    """Type mapper (medium group, text) and texture mapper (fine group, patches)."""

    def __init__(self, joint_dim: int, texture_dim: int, width: int,
                 depth: int = 4, eps: float = 1e-8):
        super().__init__()
        self.joint_dim = joint_dim
        self.texture_dim = texture_dim
        self.width = width
        self.depth = depth
        self.eps = eps
        self.type_mapper = PartPair(joint_dim, width, depth, eps)
        self.texture_mapper = PartPair(texture_dim, width, depth, eps)

    def init_weights(self, seed: int) -> "FashionMapper":
        """Near-identity start: small gamma affines, zero beta affines."""
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, ModulationBlock):
                    module.to_gamma.weight.normal_(0.0, 0.01, generator=g)
                    module.to_gamma.bias.zero_()
                    module.to_beta.weight.zero_()
                    module.to_beta.bias.zero_()
        return self

    def arch(self) -> dict:
        return {
            "joint_dim": self.joint_dim,
            "texture_dim": self.texture_dim,
            "width": self.width,
            "depth": self.depth,
            "eps": self.eps,
        }


def _branch_sum(pair: PartPair, w_part: torch.Tensor,
                e_upper: Embedding | None, e_lower: Embedding | None) -> torch.Tensor:
    """Sum of per-part branch outputs; an absent side contributes an exact zero matrix."""
    out = torch.zeros_like(w_part)
    if e_upper is not None:
        out = out + pair.upper(w_part, e_upper.values)
    if e_lower is not None:
        out = out + pair.lower(w_part, e_lower.values)
    return out


def type_offsets(w_medium: torch.Tensor, e_t_upper: Embedding | None,
                 e_t_lower: Embedding | None, mapper: FashionMapper) -> torch.Tensor:
    return _branch_sum(mapper.type_mapper, w_medium, e_t_upper, e_t_lower)


def texture_offsets(w_fine: torch.Tensor, e_p_upper: Embedding | None,
                    e_p_lower: Embedding | None, mapper: FashionMapper) -> torch.Tensor:
    return _branch_sum(mapper.texture_mapper, w_fine, e_p_upper, e_p_lower)


@dataclass
class ConditionEmbeddings:
    text_upper: Embedding | None
    text_lower: Embedding | None
    patch_upper: Embedding | None
    patch_lower: Embedding | None


def embed_patch(patch: Image, backbones: BackboneSet) -> Embedding:
    """Texture embedding: channel-wise mean of the extractor's final pyramid level."""
    pyramid = backbones.texture_extractor.features(patch)
    return Embedding(pyramid[-1].mean(dim=1), "texture")


def embed_condition(cond: EditCondition, backbones: BackboneSet) -> ConditionEmbeddings:
    """Embed each present condition side; absent sides stay None (exact zero offsets)."""
    joint = backbones.joint_embedder
    return ConditionEmbeddings(
        text_upper=joint.embed_text(cond.text_upper) if cond.text_upper else None,
        text_lower=joint.embed_text(cond.text_lower) if cond.text_lower else None,
        patch_upper=embed_patch(cond.patch_upper, backbones) if cond.patch_upper is not None else None,
        patch_lower=embed_patch(cond.patch_lower, backbones) if cond.patch_lower is not None else None,
    )


def compute_offsets(w: LatentCode, emb: ConditionEmbeddings,
                    mapper: FashionMapper) -> LatentOffset:
    return LatentOffset(
        delta_medium=type_offsets(w.medium, emb.text_upper, emb.text_lower, mapper),
        delta_fine=texture_offsets(w.fine, emb.patch_upper, emb.patch_lower, mapper),
    )


def edit(w: LatentCode, cond: EditCondition, mapper: FashionMapper,
         backbones: BackboneSet) -> tuple[LatentCode, Image]:
    """Full editing pass: condition -> offsets -> w' -> generated image."""
    emb = embed_condition(cond, backbones)
    w_edit = apply_offsets(w, compute_offsets(w, emb, mapper))
    return w_edit, backbones.generator.generate(w_edit)


def save_mapper(mapper: FashionMapper, path, extra_meta: dict | None = None) -> None:
    meta = {"kind": "fashiontex-mapper", "arch": mapper.arch()}
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, dict(mapper.state_dict()), meta)


def load_mapper(path) -> FashionMapper:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "fashiontex-mapper":
        raise ValueError(f"{path}: not a mapper checkpoint (kind={meta.get('kind')!r})")
    mapper = FashionMapper(**meta["arch"])
    restore_mapper_state(mapper, tensors)
    return mapper


def restore_mapper_state(mapper: FashionMapper, tensors: dict[str, torch.Tensor],
                         prefix: str = "") -> None:
    """Copy container tensors into the module, restoring original shapes."""
    state = mapper.state_dict()
    with torch.no_grad():
        for name, param in state.items():
            key = prefix + name
            if key not in tensors:
                raise ValueError(f"checkpoint is missing tensor {key!r}")
            param.copy_(tensors[key].reshape(param.shape))
    mapper.load_state_dict(state)
